//! Per-agent switched optimal control problem and the sequential distributed scheme.
//!
//! Every agent minimises `sum_{t=1..N} ||p_t - p_ref||` over mode sequences subject to
//! the linearised obstacle and neighbour constraints at each predicted step. The
//! decision space is finite (`|modes|^N`), so the problem is solved to global
//! optimality by depth-first search over the mode tree with two pruning rules:
//!
//! - a prefix whose latest pose violates a step constraint is cut;
//! - a prefix whose cost plus an admissible lower bound cannot beat the incumbent is cut.
//!
//! Children are visited in ascending mode order, so among equal-cost sequences the
//! lexicographically smallest one is found first and kept.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use crate::avoidance::{self, best_facet_margin, outside_polytope, LinearConstraint, SafetySphere};
use crate::kinematics::{Mode, Pose, SwitchSequence, SwitchedModel};
use crate::{Error, Result, Vec3};

/// Costs (and violations) closer than this are treated as equal.
pub const TIE_TOLERANCE: f64 = 1e-12;

/// Agents within `r_cl` of agent `i` (strict), excluding `i`.
pub fn compute_cluster(
    positions: &BTreeMap<usize, Vec3>,
    i: usize,
    cluster_radius: f64,
) -> Result<BTreeSet<usize>> {
    if !(cluster_radius > 0.0) {
        return Err(Error::Domain(format!("cluster radius must be positive, got {cluster_radius}")));
    }
    let pi = positions
        .get(&i)
        .ok_or_else(|| Error::Domain(format!("unknown agent id {i}")))?;
    Ok(positions
        .iter()
        .filter(|&(&j, pj)| j != i && (pi - pj).norm() < cluster_radius)
        .map(|(&j, _)| j)
        .collect())
}

/// How a neighbour's shared sequence relates to the current round.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum PlanSource {
    /// Solved earlier in this round.
    Fresh,
    /// Previous round's sequence shifted by one step.
    Shifted,
    /// No sequence available; the neighbour is held in place.
    Static,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NeighborInfo {
    pub id: usize,
    pub pose: Pose,
    pub radius: f64,
    pub plan: Option<SwitchSequence>,
    pub source: PlanSource,
}

/// What agent `owner` knows about its cluster at one step.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterView {
    pub owner: usize,
    pub neighbors: Vec<NeighborInfo>,
}

/// Positions at `k+1..=k+horizon` for every neighbour in the view, reconstructed
/// from the shared sequence. Missing (or unusable) sequences give a static neighbour.
pub fn neighbor_trajectories(
    view: &ClusterView,
    model: &SwitchedModel,
    horizon: usize,
) -> BTreeMap<usize, Vec<Vec3>> {
    view.neighbors
        .iter()
        .map(|nb| {
            let hold = vec![nb.pose.position; horizon];
            let path = match &nb.plan {
                Some(seq) if !seq.is_empty() => {
                    let mut modes = seq.modes().to_vec();
                    modes.resize(horizon, Mode::HOVER);
                    match model.rollout(&nb.pose, &SwitchSequence(modes)) {
                        Ok(poses) => poses[1..].iter().map(|p| p.position).collect(),
                        Err(_) => hold,
                    }
                }
                _ => hold,
            };
            (nb.id, path)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum HazardKind {
    Obstacle(usize),
    Agent(usize),
}

/// A predicted sphere to stay out of at every step of the horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct Hazard {
    pub kind: HazardKind,
    /// Centre at `k+1..=k+N`.
    pub positions: Vec<Vec3>,
    /// `R_i + R_other + delta`.
    pub radius: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OcpProblem {
    pub state: Pose,
    pub reference: Vec3,
    pub horizon: usize,
    pub model: SwitchedModel,
    /// Modes the search may use, ascending.
    pub allowed_modes: Vec<Mode>,
    /// Unit facet normals shared by every safety sphere.
    pub normals: Vec<Vec3>,
    pub obstacles: Vec<Hazard>,
    pub neighbors: Vec<Hazard>,
}

impl OcpProblem {
    pub fn new(state: Pose, reference: Vec3, horizon: usize, model: SwitchedModel, normals: Vec<Vec3>) -> Self {
        Self {
            state,
            reference,
            horizon,
            model,
            allowed_modes: Mode::all().collect(),
            normals,
            obstacles: Vec::new(),
            neighbors: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::Domain("horizon must be at least 1".into()));
        }
        if self.allowed_modes.is_empty() {
            return Err(Error::Domain("no modes allowed".into()));
        }
        if self.allowed_modes.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Domain("allowed modes must be strictly ascending".into()));
        }
        if self.normals.is_empty() && !(self.obstacles.is_empty() && self.neighbors.is_empty()) {
            return Err(Error::Domain("hazards given without facet normals".into()));
        }
        for h in self.hazards() {
            if h.positions.len() != self.horizon {
                return Err(Error::Domain(format!(
                    "{:?} has {} predicted positions, horizon is {}",
                    h.kind,
                    h.positions.len(),
                    self.horizon
                )));
            }
            if !(h.radius > 0.0) {
                return Err(Error::Domain(format!("{:?} has non-positive radius", h.kind)));
            }
        }
        Ok(())
    }

    /// Obstacles first, then neighbours.
    pub fn hazards(&self) -> impl Iterator<Item = &Hazard> {
        self.obstacles.iter().chain(self.neighbors.iter())
    }

    /// Cost `sum_{t=1..N} ||p_t - p_ref||` of a pose list that includes the start.
    pub fn cost_of(&self, poses: &[Pose]) -> f64 {
        poses.iter().skip(1).fold(0.0, |acc, p| acc + (p.position - self.reference).norm())
    }
}

/// One linear constraint per hazard per step, each with its facet selected at the
/// candidate pose of that step. `candidate` holds the poses at `k+1..=k+N`.
pub fn assemble_constraints(problem: &OcpProblem, candidate: &[Pose]) -> Result<Vec<Vec<LinearConstraint>>> {
    if candidate.len() != problem.horizon {
        return Err(Error::Domain(format!(
            "candidate has {} poses, horizon is {}",
            candidate.len(),
            problem.horizon
        )));
    }
    candidate
        .iter()
        .enumerate()
        .map(|(t, pose)| {
            let mut out = Vec::new();
            for o in &problem.obstacles {
                let sphere = SafetySphere { center: o.positions[t], radius: o.radius };
                out.push(avoidance::build_obstacle_constraint(&pose.position, &sphere, &problem.normals, t)?);
            }
            for n in &problem.neighbors {
                let sphere = SafetySphere { center: n.positions[t], radius: n.radius };
                out.push(avoidance::build_agent_constraint(&pose.position, &sphere, &problem.normals, t)?);
            }
            Ok(out)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Solution {
    pub sequence: SwitchSequence,
    /// Start pose followed by the `N` predicted poses.
    pub poses: Vec<Pose>,
    pub cost: f64,
    pub feasible: bool,
    /// Sum of positive constraint slacks; zero when feasible.
    pub violation: f64,
    /// Search nodes expanded (diagnostic).
    pub nodes: u64,
}

impl Solution {
    pub fn first_mode(&self) -> Mode {
        self.sequence.first().unwrap_or(Mode::HOVER)
    }
}

struct Incumbent {
    modes: Vec<Mode>,
    poses: Vec<Pose>,
    cost: f64,
    violation: f64,
}

struct Search<'a> {
    problem: &'a OcpProblem,
    hazards: Vec<&'a Hazard>,
    reach: f64,
    modes: Vec<Mode>,
    poses: Vec<Pose>,
    best: Option<Incumbent>,
    nodes: u64,
}

impl<'a> Search<'a> {
    fn new(problem: &'a OcpProblem) -> Self {
        let n = problem.horizon;
        let mut poses = vec![problem.state; n + 1];
        poses[0] = problem.state;
        Self {
            problem,
            hazards: problem.hazards().collect(),
            reach: problem.model.max_step_displacement(),
            modes: vec![Mode::HOVER; n],
            poses,
            best: None,
            nodes: 0,
        }
    }

    /// `sum_{s=1..R} max(0, d - s * reach)`: every later position is at most
    /// `s * reach` closer to the reference than the current one.
    fn lower_bound(&self, distance: f64, remaining: usize) -> f64 {
        let mut lb = 0.0;
        for s in 1..=remaining {
            let d = distance - s as f64 * self.reach;
            if d <= 0.0 {
                break;
            }
            lb += d;
        }
        lb
    }

    fn feasible_at(&self, p: &Vec3, t: usize) -> bool {
        let normals = &self.problem.normals;
        self.hazards.iter().all(|h| outside_polytope(normals, p, &h.positions[t], h.radius))
    }

    fn violation_at(&self, p: &Vec3, t: usize, mut acc: f64) -> f64 {
        let normals = &self.problem.normals;
        for h in &self.hazards {
            acc += (-best_facet_margin(normals, p, &h.positions[t], h.radius)).max(0.0);
        }
        acc
    }

    fn record(&mut self, cost: f64, violation: f64) {
        self.best = Some(Incumbent {
            modes: self.modes.clone(),
            poses: self.poses.clone(),
            cost,
            violation,
        });
    }

    fn feasible_dfs(&mut self, depth: usize, cost: f64) {
        let n = self.problem.horizon;
        if depth == n {
            let better = match &self.best {
                None => true,
                Some(b) => {
                    cost < b.cost - TIE_TOLERANCE
                        || ((cost - b.cost).abs() <= TIE_TOLERANCE && self.modes < b.modes)
                }
            };
            if better {
                self.record(cost, 0.0);
            }
            return;
        }
        let pose = self.poses[depth];
        let Ok(blocks) = self.problem.model.blocks(&pose) else {
            return;
        };
        let remaining = n - depth - 1;
        for i in 0..self.problem.allowed_modes.len() {
            let mode = self.problem.allowed_modes[i];
            self.nodes += 1;
            let child = self.problem.model.advance(&pose, &blocks, mode);
            if !self.feasible_at(&child.position, depth) {
                continue;
            }
            let dist = (child.position - self.problem.reference).norm();
            let child_cost = cost + dist;
            if let Some(b) = &self.best {
                if child_cost + self.lower_bound(dist, remaining) > b.cost + TIE_TOLERANCE {
                    continue;
                }
            }
            self.modes[depth] = mode;
            self.poses[depth + 1] = child;
            self.feasible_dfs(depth + 1, child_cost);
        }
    }

    fn violation_dfs(&mut self, depth: usize, violation: f64, cost: f64) {
        let n = self.problem.horizon;
        if depth == n {
            let better = match &self.best {
                None => true,
                Some(b) => {
                    violation < b.violation - TIE_TOLERANCE
                        || ((violation - b.violation).abs() <= TIE_TOLERANCE
                            && (cost < b.cost - TIE_TOLERANCE
                                || ((cost - b.cost).abs() <= TIE_TOLERANCE && self.modes < b.modes)))
                }
            };
            if better {
                self.record(cost, violation);
            }
            return;
        }
        let pose = self.poses[depth];
        let Ok(blocks) = self.problem.model.blocks(&pose) else {
            return;
        };
        for i in 0..self.problem.allowed_modes.len() {
            let mode = self.problem.allowed_modes[i];
            self.nodes += 1;
            let child = self.problem.model.advance(&pose, &blocks, mode);
            let v = self.violation_at(&child.position, depth, violation);
            if let Some(b) = &self.best {
                if v > b.violation + TIE_TOLERANCE {
                    continue;
                }
            }
            let child_cost = cost + (child.position - self.problem.reference).norm();
            self.modes[depth] = mode;
            self.poses[depth + 1] = child;
            self.violation_dfs(depth + 1, v, child_cost);
        }
    }
}

/// Globally optimal mode sequence for the discrete OCP.
///
/// If no sequence satisfies every constraint, the one with the least total violation
/// (ties broken by cost, then lexicographically) is returned with `feasible = false`.
pub fn solve(problem: &OcpProblem) -> Result<Solution> {
    problem.validate()?;
    let mut search = Search::new(problem);
    search.feasible_dfs(0, 0.0);
    let feasible = search.best.is_some();
    if !feasible {
        search.violation_dfs(0, 0.0, 0.0);
    }
    let nodes = search.nodes;
    Ok(match search.best {
        Some(b) => Solution {
            sequence: SwitchSequence(b.modes),
            poses: b.poses,
            cost: b.cost,
            feasible,
            violation: b.violation,
            nodes,
        },
        // Every branch hit the pitch singularity.
        None => {
            let poses = vec![problem.state; problem.horizon + 1];
            Solution {
                sequence: SwitchSequence::hover(problem.horizon),
                cost: problem.cost_of(&poses),
                poses,
                feasible: false,
                violation: f64::INFINITY,
                nodes,
            }
        }
    })
}

/// Parameters shared by every agent's OCP.
#[derive(Debug, Clone, PartialEq)]
pub struct SmpcSettings {
    pub model: SwitchedModel,
    pub horizon: usize,
    pub allowed_modes: Vec<Mode>,
    pub normals: Vec<Vec3>,
    pub cluster_radius: f64,
    /// Obstacles farther than this from the agent are left out of its OCP.
    pub sensing_radius: f64,
    pub obstacle_radius: f64,
    pub obstacle_margin: f64,
    pub agent_margin: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Agent {
    pub id: usize,
    pub pose: Pose,
    pub reference: Vec3,
    /// Encapsulating radius `R_i`.
    pub radius: f64,
    /// Sequence published in the previous round.
    pub plan: Option<SwitchSequence>,
}

/// One agent's forecast of one obstacle.
#[derive(Debug, Clone, PartialEq)]
pub struct ObstacleForecast {
    pub id: usize,
    /// Latest measured position, used for the sensing-range test.
    pub current: Vec3,
    /// Predicted positions at `k+1..=k+N`.
    pub positions: Vec<Vec3>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundOutcome {
    /// Solutions indexed like the `agents` slice.
    pub solutions: Vec<Solution>,
    pub views: Vec<ClusterView>,
}

impl RoundOutcome {
    pub fn committed(&self) -> Vec<Mode> {
        self.solutions.iter().map(Solution::first_mode).collect()
    }
}

/// Builds the OCP agent `agents[idx]` solves given its cluster view and forecasts.
pub fn build_problem(
    agents: &[Agent],
    idx: usize,
    view: &ClusterView,
    forecasts: &[ObstacleForecast],
    settings: &SmpcSettings,
) -> OcpProblem {
    let me = &agents[idx];
    let mut problem = OcpProblem::new(me.pose, me.reference, settings.horizon, settings.model, settings.normals.clone());
    problem.allowed_modes = settings.allowed_modes.clone();
    problem.obstacles = forecasts
        .iter()
        .filter(|f| (f.current - me.pose.position).norm() <= settings.sensing_radius)
        .map(|f| Hazard {
            kind: HazardKind::Obstacle(f.id),
            positions: f.positions.clone(),
            radius: me.radius + settings.obstacle_radius + settings.obstacle_margin,
        })
        .collect();
    let paths = neighbor_trajectories(view, &settings.model, settings.horizon);
    problem.neighbors = view
        .neighbors
        .iter()
        .map(|nb| Hazard {
            kind: HazardKind::Agent(nb.id),
            positions: paths[&nb.id].clone(),
            radius: me.radius + nb.radius + settings.agent_margin,
        })
        .collect();
    problem
}

/// One step of the sequential scheme.
///
/// Agents solve in `order` (a permutation of their ids), all from the states at the
/// current step. An agent sees the fresh sequences of neighbours that already solved
/// in this round and the shifted previous sequences of the others; neighbours with
/// no sequence yet are treated as static.
pub fn sequential_round(
    agents: &[Agent],
    forecasts: &[Vec<ObstacleForecast>],
    order: &[usize],
    settings: &SmpcSettings,
) -> Result<RoundOutcome> {
    if forecasts.len() != agents.len() {
        return Err(Error::Domain("one forecast list per agent is required".into()));
    }
    let index: BTreeMap<usize, usize> = agents.iter().enumerate().map(|(k, a)| (a.id, k)).collect();
    if index.len() != agents.len() {
        return Err(Error::Domain("agent ids must be unique".into()));
    }
    let mut seen = BTreeSet::new();
    if order.len() != agents.len() || !order.iter().all(|id| index.contains_key(id) && seen.insert(*id)) {
        return Err(Error::Domain("order must be a permutation of the agent ids".into()));
    }
    let positions: BTreeMap<usize, Vec3> = agents.iter().map(|a| (a.id, a.pose.position)).collect();

    let mut solved: Vec<Option<Solution>> = vec![None; agents.len()];
    let mut views: Vec<Option<ClusterView>> = vec![None; agents.len()];
    for &id in order {
        let idx = index[&id];
        let cluster = compute_cluster(&positions, id, settings.cluster_radius)?;
        let neighbors = cluster
            .iter()
            .map(|j| {
                let jdx = index[j];
                let other = &agents[jdx];
                let (plan, source) = match (&solved[jdx], &other.plan) {
                    (Some(sol), _) => (Some(sol.sequence.clone()), PlanSource::Fresh),
                    (None, Some(prev)) => (Some(prev.shifted()), PlanSource::Shifted),
                    (None, None) => (None, PlanSource::Static),
                };
                NeighborInfo { id: *j, pose: other.pose, radius: other.radius, plan, source }
            })
            .collect();
        let view = ClusterView { owner: id, neighbors };
        let problem = build_problem(agents, idx, &view, &forecasts[idx], settings);
        solved[idx] = Some(solve(&problem)?);
        views[idx] = Some(view);
    }
    Ok(RoundOutcome {
        solutions: solved.into_iter().map(|s| s.expect("every agent solved")).collect(),
        views: views.into_iter().map(|v| v.expect("every agent solved")).collect(),
    })
}

/// Applies the committed first modes and stores the published sequences.
pub fn commit_round(agents: &mut [Agent], outcome: &RoundOutcome, model: &SwitchedModel) -> Result<()> {
    for (agent, sol) in agents.iter_mut().zip(&outcome.solutions) {
        agent.pose = model.step(&agent.pose, sol.first_mode())?;
        agent.plan = Some(sol.sequence.clone());
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::avoidance::{facet_normals, FacetLayout};
    use crate::kinematics::ModeSet;

    fn model() -> SwitchedModel {
        SwitchedModel::new(ModeSet::new(0.2, 0.6).unwrap(), 0.01).unwrap()
    }

    fn normals() -> Vec<Vec3> {
        facet_normals(26, FacetLayout::Fibonacci).unwrap()
    }

    #[test]
    fn cluster_basic() {
        let mut pos = BTreeMap::new();
        pos.insert(1, Vec3::zeros());
        pos.insert(2, Vec3::new(0.5, 0.0, 0.0));
        assert_eq!(compute_cluster(&pos, 1, 0.9).unwrap(), BTreeSet::from([2]));
        assert_eq!(compute_cluster(&pos, 2, 0.9).unwrap(), BTreeSet::from([1]));
    }

    #[test]
    fn cluster_boundary_is_excluded() {
        let mut pos = BTreeMap::new();
        pos.insert(0, Vec3::zeros());
        pos.insert(1, Vec3::new(0.5, 0.0, 0.0));
        assert!(compute_cluster(&pos, 0, 0.5).unwrap().is_empty());
    }

    #[test]
    fn cluster_singleton_and_unknown() {
        let pos = BTreeMap::from([(7, Vec3::zeros())]);
        assert!(compute_cluster(&pos, 7, 1.0).unwrap().is_empty());
        assert!(compute_cluster(&pos, 3, 1.0).is_err());
    }

    #[test]
    fn static_and_hover_neighbors_hold_position() {
        let pose = Pose::at(Vec3::new(1.0, 2.0, 0.0));
        let view = ClusterView {
            owner: 0,
            neighbors: vec![
                NeighborInfo { id: 1, pose, radius: 0.1, plan: None, source: PlanSource::Static },
                NeighborInfo { id: 2, pose, radius: 0.1, plan: Some(SwitchSequence::hover(4)), source: PlanSource::Fresh },
            ],
        };
        let paths = neighbor_trajectories(&view, &model(), 4);
        assert_eq!(paths[&1], vec![pose.position; 4]);
        assert_eq!(paths[&2], vec![pose.position; 4]);
    }

    #[test]
    fn no_hazards_no_constraints() {
        let p = OcpProblem::new(Pose::at(Vec3::zeros()), Vec3::zeros(), 4, model(), normals());
        let c = assemble_constraints(&p, &[Pose::at(Vec3::zeros()); 4]).unwrap();
        assert!(c.iter().all(Vec::is_empty));
    }

    #[test]
    fn one_obstacle_one_constraint_per_step() {
        let mut p = OcpProblem::new(Pose::at(Vec3::zeros()), Vec3::zeros(), 4, model(), normals());
        p.obstacles.push(Hazard { kind: HazardKind::Obstacle(0), positions: vec![Vec3::new(1.0, 0.0, 0.0); 4], radius: 0.24 });
        let c = assemble_constraints(&p, &[Pose::at(Vec3::zeros()); 4]).unwrap();
        assert_eq!(c.iter().map(Vec::len).sum::<usize>(), 4);
        p.neighbors.push(Hazard { kind: HazardKind::Agent(3), positions: vec![Vec3::new(0.0, 1.0, 0.0); 4], radius: 0.24 });
        p.neighbors.push(Hazard { kind: HazardKind::Agent(4), positions: vec![Vec3::new(0.0, -1.0, 0.0); 4], radius: 0.24 });
        let c = assemble_constraints(&p, &[Pose::at(Vec3::zeros()); 4]).unwrap();
        assert_eq!(c.iter().map(Vec::len).sum::<usize>(), 4 * 3);
    }

    #[test]
    fn at_reference_hovers() {
        let start = Pose::at(Vec3::new(0.3, -0.2, 0.0));
        let p = OcpProblem::new(start, start.position, 4, model(), normals());
        let s = solve(&p).unwrap();
        assert_eq!(s.sequence, SwitchSequence::hover(4));
        assert_eq!(s.cost, 0.0);
        assert!(s.feasible);
    }

    #[test]
    fn far_reference_goes_forward() {
        let start = Pose::at(Vec3::zeros());
        let p = OcpProblem::new(start, Vec3::new(10.0, 0.0, 0.0), 2, model(), normals());
        let s = solve(&p).unwrap();
        assert_eq!(s.sequence, SwitchSequence::from_indices(&[2, 2]).unwrap());
        assert!((s.cost - p.cost_of(&s.poses)).abs() <= 1e-12);
    }

    #[test]
    fn blocked_agent_reports_violation() {
        let start = Pose::at(Vec3::zeros());
        let mut p = OcpProblem::new(start, Vec3::new(1.0, 0.0, 0.0), 2, model(), normals());
        p.obstacles.push(Hazard { kind: HazardKind::Obstacle(0), positions: vec![Vec3::zeros(); 2], radius: 0.24 });
        let s = solve(&p).unwrap();
        assert!(!s.feasible);
        assert!(s.violation > 0.0);
    }

    #[test]
    fn order_must_be_permutation() {
        let settings = SmpcSettings {
            model: model(),
            horizon: 2,
            allowed_modes: Mode::all().collect(),
            normals: normals(),
            cluster_radius: 0.9,
            sensing_radius: 1.8,
            obstacle_radius: 0.1125,
            obstacle_margin: 0.015,
            agent_margin: 0.015,
        };
        let agents = vec![Agent { id: 0, pose: Pose::at(Vec3::zeros()), reference: Vec3::zeros(), radius: 0.1, plan: None }];
        assert!(sequential_round(&agents, &[vec![]], &[1], &settings).is_err());
        assert!(sequential_round(&agents, &[vec![]], &[0, 0], &settings).is_err());
        assert!(sequential_round(&agents, &[vec![]], &[0], &settings).is_ok());
    }
}
