//! Sphere safety constraints and their linearisation through tangent polytopes.
//!
//! A safety sphere around a predicted obstacle (or neighbour) is circumscribed by a
//! polytope whose facets are tangent planes `eta_mu^T q = d`. For a candidate UAV
//! position the facet with the largest signed distance is selected, and the
//! half-space `eta^T (p - o) >= d` outside it becomes a linear constraint. Since
//! `d` equals the sphere radius and `eta` is a unit vector, satisfying the half-space
//! implies `||p - o|| >= radius`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::{Error, Result, Vec3};

/// Default number of facets per safety sphere.
pub const DEFAULT_FACETS: usize = 26;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FacetLayout {
    /// Fibonacci spiral lattice on the unit sphere.
    #[default]
    Fibonacci,
    /// The six directions `+-e_x, +-e_y, +-e_z` (requires exactly six facets).
    AxisAligned,
}

/// Deterministic, approximately uniform unit normals.
pub fn facet_normals(gamma: usize, layout: FacetLayout) -> Result<Vec<Vec3>> {
    if gamma < 6 {
        return Err(Error::Domain(format!("at least 6 facets are needed to bound a ball, got {gamma}")));
    }
    match layout {
        FacetLayout::AxisAligned => {
            if gamma != 6 {
                return Err(Error::Domain(format!("axis-aligned layout has 6 facets, got {gamma}")));
            }
            Ok(vec![Vec3::x(), -Vec3::x(), Vec3::y(), -Vec3::y(), Vec3::z(), -Vec3::z()])
        }
        FacetLayout::Fibonacci => {
            let golden = PI * (3.0 - 5f64.sqrt());
            let n = gamma as f64;
            Ok((0..gamma)
                .map(|i| {
                    let z = 1.0 - (2 * i + 1) as f64 / n;
                    let r = (1.0 - z * z).max(0.0).sqrt();
                    let phi = golden * i as f64;
                    Vec3::new(r * phi.cos(), r * phi.sin(), z).normalize()
                })
                .collect())
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SafetySphere {
    pub center: Vec3,
    pub radius: f64,
}

impl SafetySphere {
    /// Sphere of radius `r_a + r_b + margin` around `center`.
    pub fn new(center: Vec3, r_a: f64, r_b: f64, margin: f64) -> Result<Self> {
        let radius = r_a + r_b + margin;
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::Domain(format!("safety radius must be positive, got {radius}")));
        }
        Ok(Self { center, radius })
    }
}

/// Unit normals with one offset per facet.
#[derive(Debug, Clone, PartialEq)]
pub struct FacetSet {
    pub normals: Vec<Vec3>,
    pub offsets: Vec<f64>,
}

impl FacetSet {
    /// Planes tangent to a ball of `radius`.
    pub fn tangent(normals: Vec<Vec3>, radius: f64) -> Self {
        let offsets = vec![radius; normals.len()];
        Self { normals, offsets }
    }

    pub fn len(&self) -> usize {
        self.normals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.normals.is_empty()
    }
}

/// Half-space `normal^T (p - reference) >= offset` for a given step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LinearConstraint {
    pub normal: Vec3,
    pub offset: f64,
    pub reference: Vec3,
    pub time_index: usize,
}

impl LinearConstraint {
    /// Signed slack; non-negative when satisfied.
    pub fn margin(&self, p: &Vec3) -> f64 {
        self.normal.dot(&(p - self.reference)) - self.offset
    }

    pub fn satisfied(&self, p: &Vec3) -> bool {
        self.normal.dot(&(p - self.reference)) >= self.offset
    }
}

/// `rho_mu = eta_mu^T (p - o) - d_mu` for every facet.
pub fn signed_distances(p: &Vec3, o: &Vec3, facets: &FacetSet) -> Vec<f64> {
    let delta = p - o;
    facets
        .normals
        .iter()
        .zip(&facets.offsets)
        .map(|(n, d)| n.dot(&delta) - d)
        .collect()
}

/// Zero-based index of the largest signed distance; ties go to the lowest index.
pub fn select_facet(rho: &[f64]) -> Result<usize> {
    let mut it = rho.iter().enumerate();
    let (mut best, mut best_val) = match it.next() {
        Some((i, &v)) => (i, v),
        None => return Err(Error::Domain("no facets to select from".into())),
    };
    for (i, &v) in it {
        if v > best_val {
            best = i;
            best_val = v;
        }
    }
    Ok(best)
}

fn build_constraint(
    p_nominal: &Vec3,
    sphere: &SafetySphere,
    normals: &[Vec3],
    time_index: usize,
) -> Result<LinearConstraint> {
    let facets = FacetSet::tangent(normals.to_vec(), sphere.radius);
    let rho = signed_distances(p_nominal, &sphere.center, &facets);
    let mu = select_facet(&rho)?;
    Ok(LinearConstraint {
        normal: facets.normals[mu],
        offset: facets.offsets[mu],
        reference: sphere.center,
        time_index,
    })
}

/// Linear avoidance constraint against a predicted obstacle, with the facet chosen
/// at `p_nominal`. `sphere.center` is the predicted obstacle position.
pub fn build_obstacle_constraint(
    p_nominal: &Vec3,
    sphere: &SafetySphere,
    normals: &[Vec3],
    time_index: usize,
) -> Result<LinearConstraint> {
    build_constraint(p_nominal, sphere, normals, time_index)
}

/// Linear separation constraint against a neighbour's predicted position
/// (`sphere.center`), radius `R_i + R_j + delta`.
pub fn build_agent_constraint(
    p_nominal: &Vec3,
    sphere: &SafetySphere,
    normals: &[Vec3],
    time_index: usize,
) -> Result<LinearConstraint> {
    build_constraint(p_nominal, sphere, normals, time_index)
}

/// Largest facet slack `max_mu (eta_mu^T (p - o)) - radius` for tangent facets.
///
/// Equivalent to evaluating the selected constraint at `p`: non-negative iff `p`
/// lies outside the circumscribing polytope.
pub fn best_facet_margin(normals: &[Vec3], p: &Vec3, o: &Vec3, radius: f64) -> f64 {
    let delta = p - o;
    let best = normals.iter().map(|n| n.dot(&delta)).fold(f64::NEG_INFINITY, f64::max);
    best - radius
}

/// True iff some tangent facet is satisfied at `p`. Short-circuits.
pub fn outside_polytope(normals: &[Vec3], p: &Vec3, o: &Vec3, radius: f64) -> bool {
    let delta = p - o;
    normals.iter().any(|n| n.dot(&delta) >= radius)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_unit(rng: &mut ChaCha8Rng) -> Vec3 {
        loop {
            let v = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            let n = v.norm();
            if n > 1e-3 && n <= 1.0 {
                return v / n;
            }
        }
    }

    /// Brute-force largest angle from any probe direction to its nearest normal.
    fn covering_gap(normals: &[Vec3]) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        (0..20_000)
            .map(|_| {
                let u = random_unit(&mut rng);
                normals.iter().map(|n| n.dot(&u).clamp(-1.0, 1.0).acos()).fold(f64::INFINITY, f64::min)
            })
            .fold(0.0, f64::max)
    }

    #[test]
    fn axis_aligned_six() {
        let n = facet_normals(6, FacetLayout::AxisAligned).unwrap();
        assert_eq!(n.len(), 6);
        for e in [Vec3::x(), Vec3::y(), Vec3::z()] {
            assert!(n.contains(&e));
            assert!(n.contains(&-e));
        }
    }

    #[test]
    fn too_few_facets() {
        assert!(facet_normals(5, FacetLayout::Fibonacci).is_err());
        assert!(facet_normals(8, FacetLayout::AxisAligned).is_err());
    }

    #[test]
    fn fibonacci_normals_are_unit_and_deterministic() {
        for g in [6, 26, 106, 500] {
            let a = facet_normals(g, FacetLayout::Fibonacci).unwrap();
            let b = facet_normals(g, FacetLayout::Fibonacci).unwrap();
            assert_eq!(a, b);
            assert!(a.iter().all(|n| (n.norm() - 1.0).abs() <= 1e-12));
        }
    }

    #[test]
    fn covering_gap_shrinks_with_more_facets() {
        let gaps: Vec<f64> = [6, 26, 106]
            .iter()
            .map(|&g| covering_gap(&facet_normals(g, FacetLayout::Fibonacci).unwrap()))
            .collect();
        assert!(gaps[0] > gaps[1] && gaps[1] > gaps[2], "{gaps:?}");
        // 26 facets keep the half-angle near 30 degrees.
        assert!(gaps[1].to_degrees() < 32.0, "{gaps:?}");
    }

    #[test]
    fn signed_distance_along_first_normal() {
        let normals = facet_normals(26, FacetLayout::Fibonacci).unwrap();
        let facets = FacetSet::tangent(normals.clone(), 0.4);
        let o = Vec3::new(1.0, 2.0, 3.0);
        let p = o + normals[0] * (0.4 + 1.0);
        let rho = signed_distances(&p, &o, &facets);
        assert!((rho[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn signed_distance_at_center() {
        let facets = FacetSet::tangent(facet_normals(26, FacetLayout::Fibonacci).unwrap(), 0.4);
        let o = Vec3::new(-1.0, 0.5, 0.0);
        assert!(signed_distances(&o, &o, &facets).iter().all(|&r| r == -0.4));
    }

    #[test]
    fn signed_distances_match_per_facet_dot_products() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let normals = facet_normals(26, FacetLayout::Fibonacci).unwrap();
        let offsets: Vec<f64> = (0..26).map(|_| rng.random_range(0.1..1.0)).collect();
        let facets = FacetSet { normals: normals.clone(), offsets: offsets.clone() };
        for _ in 0..100 {
            let p = Vec3::new(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0));
            let o = Vec3::new(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0));
            let rho = signed_distances(&p, &o, &facets);
            for mu in 0..26 {
                let n = normals[mu];
                let oracle = n.x * (p.x - o.x) + n.y * (p.y - o.y) + n.z * (p.z - o.z) - offsets[mu];
                assert!((rho[mu] - oracle).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn select_facet_argmax_and_ties() {
        assert_eq!(select_facet(&[-1.0, 3.0, 2.0]).unwrap(), 1);
        assert_eq!(select_facet(&[5.0, 5.0, 1.0]).unwrap(), 0);
        assert!(select_facet(&[]).is_err());
    }

    #[test]
    fn select_facet_matches_linear_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..500 {
            let n = rng.random_range(1..40);
            let rho: Vec<f64> = (0..n).map(|_| (rng.random_range(-5..5) as f64) * 0.5).collect();
            let mut oracle = 0;
            for i in 1..n {
                if rho[i] > rho[oracle] {
                    oracle = i;
                }
            }
            assert_eq!(select_facet(&rho).unwrap(), oracle);
        }
    }

    #[test]
    fn obstacle_constraint_along_x() {
        let normals = facet_normals(6, FacetLayout::AxisAligned).unwrap();
        let sphere = SafetySphere { center: Vec3::new(1.0, 1.0, 0.0), radius: 0.5 };
        let c = build_obstacle_constraint(&Vec3::new(3.0, 1.0, 0.0), &sphere, &normals, 0).unwrap();
        assert_eq!(c.normal, Vec3::x());
        assert_eq!(c.offset, 0.5);
        assert_eq!(c.reference, sphere.center);
    }

    #[test]
    fn coincident_nominal_takes_first_facet() {
        let normals = facet_normals(26, FacetLayout::Fibonacci).unwrap();
        let sphere = SafetySphere { center: Vec3::new(0.2, 0.0, 0.0), radius: 0.24 };
        let c = build_obstacle_constraint(&sphere.center, &sphere, &normals, 2).unwrap();
        assert_eq!(c.normal, normals[0]);
        assert_eq!(c.time_index, 2);
    }

    #[test]
    fn interior_points_violate() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let normals = facet_normals(26, FacetLayout::Fibonacci).unwrap();
        for _ in 0..10_000 {
            let sphere = SafetySphere { center: Vec3::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0), 0.0), radius: rng.random_range(0.05..1.0) };
            let p = sphere.center + random_unit(&mut rng) * sphere.radius * rng.random_range(0.0..0.999);
            let c = build_obstacle_constraint(&p, &sphere, &normals, 0).unwrap();
            assert!(!c.satisfied(&p));
        }
    }

    #[test]
    fn agent_radius_and_zero_margin() {
        let s = SafetySphere::new(Vec3::zeros(), 0.1125, 0.1125, 0.015).unwrap();
        assert!((s.radius - 0.24).abs() < 1e-15);
        let s0 = SafetySphere::new(Vec3::zeros(), 0.1125, 0.2, 0.0).unwrap();
        assert_eq!(s0.radius, 0.3125);
        assert!(SafetySphere::new(Vec3::zeros(), 0.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn agent_constraints_mirror() {
        // Symmetric facet set so that the mirrored normal is available to both sides.
        let normals = facet_normals(6, FacetLayout::AxisAligned).unwrap();
        let pi = Vec3::new(0.3, 0.1, 0.0);
        let pj = Vec3::new(-0.3, -0.1, 0.0);
        let ij = build_agent_constraint(&pi, &SafetySphere { center: pj, radius: 0.24 }, &normals, 0).unwrap();
        let ji = build_agent_constraint(&pj, &SafetySphere { center: pi, radius: 0.24 }, &normals, 0).unwrap();
        assert_eq!(ij.normal, -ji.normal);
    }

    #[test]
    fn outside_test_agrees_with_selected_constraint() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let normals = facet_normals(26, FacetLayout::Fibonacci).unwrap();
        for _ in 0..5_000 {
            let o = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), 0.0);
            let p = o + random_unit(&mut rng) * rng.random_range(0.0..0.5);
            let sphere = SafetySphere { center: o, radius: 0.24 };
            let c = build_obstacle_constraint(&p, &sphere, &normals, 0).unwrap();
            assert_eq!(c.satisfied(&p), outside_polytope(&normals, &p, &o, 0.24));
            assert_eq!(c.margin(&p), best_facet_margin(&normals, &p, &o, 0.24));
        }
    }

    #[test]
    fn far_points_find_a_feasible_facet() {
        let normals = facet_normals(106, FacetLayout::Fibonacci).unwrap();
        let gap = covering_gap(&normals);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..10_000 {
            let r = 0.3;
            let p = random_unit(&mut rng) * (r / gap.cos() * rng.random_range(1.0001..3.0));
            let rho = signed_distances(&p, &Vec3::zeros(), &FacetSet::tangent(normals.clone(), r));
            assert!(rho[select_facet(&rho).unwrap()] >= 0.0);
        }
    }

    proptest! {
        #[test]
        fn selection_is_scale_invariant(rho in prop::collection::vec(-10.0..10.0f64, 1..30), s in 1e-3..1e3f64) {
            let scaled: Vec<f64> = rho.iter().map(|r| r * s).collect();
            prop_assert_eq!(select_facet(&rho).unwrap(), select_facet(&scaled).unwrap());
        }
    }
}
