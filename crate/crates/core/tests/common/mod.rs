//! Independent oracles shared by the integration tests.

#![allow(dead_code)]

use ksmpc_core::avoidance::{build_agent_constraint, build_obstacle_constraint, facet_normals, FacetLayout, SafetySphere};
use ksmpc_core::kinematics::{Mode, ModeSet, Pose, RotationConvention, SwitchSequence, SwitchedModel};
use ksmpc_core::smpc::{Hazard, HazardKind, OcpProblem, TIE_TOLERANCE};
use ksmpc_core::Vec3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct Enumerated {
    pub modes: Vec<Mode>,
    pub cost: f64,
    pub feasible: bool,
    pub violation: f64,
}

/// Every sequence over `allowed_modes^N` in lexicographic order.
pub fn all_sequences(allowed: &[Mode], n: usize) -> Vec<Vec<Mode>> {
    let mut out = vec![Vec::new()];
    for _ in 0..n {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                allowed.iter().map(move |m| {
                    let mut v = prefix.clone();
                    v.push(*m);
                    v
                })
            })
            .collect();
    }
    out
}

/// Scores one sequence: rollout, cost, and the summed violation of the per-step
/// constraints built at each candidate pose. `None` if the rollout is singular.
pub fn score(problem: &OcpProblem, modes: &[Mode]) -> Option<Enumerated> {
    let poses = problem.model.rollout(&problem.state, &SwitchSequence(modes.to_vec())).ok()?;
    let cost = problem.cost_of(&poses);
    let mut violation = 0.0;
    let mut feasible = true;
    for t in 0..problem.horizon {
        let p = poses[t + 1].position;
        for h in problem.obstacles.iter().chain(&problem.neighbors) {
            let sphere = SafetySphere { center: h.positions[t], radius: h.radius };
            let c = match h.kind {
                HazardKind::Obstacle(_) => build_obstacle_constraint(&p, &sphere, &problem.normals, t),
                HazardKind::Agent(_) => build_agent_constraint(&p, &sphere, &problem.normals, t),
            }
            .expect("normals are non-empty");
            if !c.satisfied(&p) {
                feasible = false;
            }
            violation += (-c.margin(&p)).max(0.0);
        }
    }
    Some(Enumerated { modes: modes.to_vec(), cost, feasible, violation })
}

/// Exhaustive solution with the documented selection rules: least cost among
/// feasible sequences, otherwise least violation then least cost; remaining ties go
/// to the lexicographically smallest sequence.
pub fn brute_force(problem: &OcpProblem) -> Option<Enumerated> {
    let scored: Vec<Enumerated> = all_sequences(&problem.allowed_modes, problem.horizon)
        .iter()
        .filter_map(|m| score(problem, m))
        .collect();
    let mut best: Option<&Enumerated> = None;
    for s in scored.iter().filter(|s| s.feasible) {
        if best.is_none_or(|b| s.cost < b.cost - TIE_TOLERANCE) {
            best = Some(s);
        }
    }
    if best.is_none() {
        for s in &scored {
            let better = best.is_none_or(|b| {
                s.violation < b.violation - TIE_TOLERANCE
                    || ((s.violation - b.violation).abs() <= TIE_TOLERANCE && s.cost < b.cost - TIE_TOLERANCE)
            });
            if better {
                best = Some(s);
            }
        }
    }
    best.cloned()
}

/// A random OCP with hazards placed near the start so constraints bind.
pub fn random_problem(rng: &mut ChaCha8Rng, horizon: usize) -> OcpProblem {
    let convention = if rng.random_bool(0.2) { RotationConvention::AsPrinted } else { RotationConvention::Standard };
    let model = SwitchedModel::new(ModeSet::new(rng.random_range(0.2..1.0), rng.random_range(0.3..2.0)).unwrap(), 0.1)
        .unwrap()
        .with_convention(convention);
    let state = Pose::new(
        Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)),
        Vec3::new(rng.random_range(-3.0..3.0), rng.random_range(-1.2..1.2), rng.random_range(-3.0..3.0)),
    );
    let reference = state.position
        + Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
    let gamma = [6, 14, 26][rng.random_range(0..3)];
    let layout = if gamma == 6 && rng.random_bool(0.5) { FacetLayout::AxisAligned } else { FacetLayout::Fibonacci };
    let mut problem = OcpProblem::new(state, reference, horizon, model, facet_normals(gamma, layout).unwrap());

    let hazard = |rng: &mut ChaCha8Rng| {
        let radius = rng.random_range(0.1..0.35);
        let dir = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
            .try_normalize(1e-9)
            .unwrap_or(Vec3::x());
        let start = state.position + dir * (radius + rng.random_range(-0.05..0.15));
        let drift = Vec3::new(rng.random_range(-0.05..0.05), rng.random_range(-0.05..0.05), 0.0);
        let positions = (1..=horizon).map(|t| start + drift * t as f64).collect();
        (positions, radius)
    };
    for id in 0..rng.random_range(0..3) {
        let (positions, radius) = hazard(rng);
        problem.obstacles.push(Hazard { kind: HazardKind::Obstacle(id), positions, radius });
    }
    for id in 0..rng.random_range(0..2) {
        let (positions, radius) = hazard(rng);
        problem.neighbors.push(Hazard { kind: HazardKind::Agent(id), positions, radius });
    }
    if rng.random_bool(0.2) {
        problem.allowed_modes = Mode::planar();
    }
    problem
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
