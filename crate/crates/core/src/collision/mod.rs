//! Conservative collision probability for a Gaussian mixture against
//! triangle-mesh obstacles.
//!
//! For each component the (densified) mesh vertices are mapped into the
//! component's whitened frame, where the component is a standard normal at
//! the origin. A convex free region is carved around the origin from
//! half-spaces whose planes touch obstacle points, and the probability mass
//! outside the region is bounded by a union bound over the half-spaces.

mod mesh;
mod scene;

use libm::erfc;

use crate::error::{Error, Result};
use crate::gmm::{self, GaussianComponent, Gmm3, Point3};

pub use mesh::{
    box_mesh, closest_point_on_triangle, parse_obj, plane_mesh, transform_mesh, EnvironmentMesh, DEFAULT_MAX_EDGE,
    MAX_DENSE_VERTICES, SURFACE_EPS,
};
pub use scene::Scene;

/// `1 − Φ(b)` for the standard normal, accurate in the upper tail.
pub fn normal_tail(b: f64) -> f64 {
    0.5 * erfc(b / std::f64::consts::SQRT_2)
}

/// Free set `{p : aᵀp ≤ b}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HalfSpace {
    pub normal: Point3,
    pub offset: f64,
}

/// Intersection of half-spaces around the origin, in one component's
/// whitened frame.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ConvexRegion {
    pub constraints: Vec<HalfSpace>,
    /// An obstacle point coincided with the origin.
    pub degenerate: bool,
}

impl ConvexRegion {
    pub fn contains(&self, p: &Point3) -> bool {
        self.constraints.iter().all(|h| h.normal.dot(p) <= h.offset)
    }

    /// `Σ_j (1 − Φ(b_j))`, the union bound on standard-normal mass outside.
    pub fn outside_mass_bound(&self) -> f64 {
        self.constraints.iter().map(|h| normal_tail(h.offset)).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComponentBound {
    /// `w_i Σ_j (1 − Φ(b_ij))`, unclamped.
    pub contribution: f64,
    pub constraints: usize,
    /// The mean touches an obstacle point (`b = 0` constraint).
    pub degenerate: bool,
    /// The mean lies strictly inside a closed obstacle; the component's
    /// whole weight is charged.
    pub mean_inside: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CollisionBound {
    /// Upper bound on the collision probability, clamped to `[0, 1]`.
    pub bound: f64,
    pub unclamped: f64,
    pub components: Vec<ComponentBound>,
}

impl CollisionBound {
    pub fn flagged(&self) -> bool {
        self.components.iter().any(|c| c.degenerate || c.mean_inside)
    }
}

/// Maps every densified mesh vertex `v` to `Ū(v − μ)`.
pub fn transform_environment(env: &EnvironmentMesh, component: &GaussianComponent) -> Vec<Point3> {
    env.dense_vertices().iter().map(|v| component.u.whiten(&(v - component.mean))).collect()
}

/// Iterative carving: the nearest remaining point `p*` contributes the
/// half-space `aᵀp ≤ ‖p*‖` with `a = p*/‖p*‖`, and every point with
/// `aᵀq ≥ b` is eliminated. Ties on distance go to the lowest index.
pub fn carve_convex_region(points: &[Point3]) -> ConvexRegion {
    let mut order: Vec<(f64, usize)> = points.iter().enumerate().map(|(i, p)| (p.norm_squared(), i)).collect();
    order.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

    let mut region = ConvexRegion::default();
    // Visiting in distance order, the first point not yet cut off by an
    // existing half-space is exactly the nearest uneliminated point.
    for &(d2, i) in &order {
        let q = &points[i];
        if region.constraints.iter().any(|h| h.normal.dot(q) >= h.offset) {
            continue;
        }
        let dist = d2.sqrt();
        if dist < 1e-12 {
            return ConvexRegion { constraints: vec![HalfSpace { normal: Point3::x(), offset: 0.0 }], degenerate: true };
        }
        region.constraints.push(HalfSpace { normal: q / dist, offset: dist });
    }
    region
}

fn component_bound(c: &GaussianComponent, env: &EnvironmentMesh) -> ComponentBound {
    if env.is_watertight() && !env.is_empty() && env.contains(&c.mean) {
        return ComponentBound { contribution: c.weight, constraints: 0, degenerate: false, mean_inside: true };
    }
    let region = carve_convex_region(&transform_environment(env, c));
    ComponentBound {
        contribution: c.weight * region.outside_mass_bound(),
        constraints: region.constraints.len(),
        degenerate: region.degenerate,
        mean_inside: false,
    }
}

/// `Σ_i w_i Σ_j (1 − Φ(b_ij))`, clamped to `[0, 1]`.
pub fn config_collision_bound(g: &Gmm3, env: &EnvironmentMesh) -> CollisionBound {
    let components: Vec<ComponentBound> = g.components().iter().map(|c| component_bound(c, env)).collect();
    let unclamped: f64 = components.iter().map(|c| c.contribution).sum();
    CollisionBound { bound: unclamped.clamp(0.0, 1.0), unclamped, components }
}

/// `1 − Π_k (1 − p_k)` over the states of a trajectory.
pub fn trajectory_collision_bound(bounds: &[f64]) -> f64 {
    debug_assert!(bounds.iter().all(|p| (0.0..=1.0).contains(p)));
    let free: f64 = bounds.iter().map(|p| 1.0 - p).product();
    1.0 - free
}

/// Inside the closed mesh, or within `clearance` of any triangle. Surface
/// contact counts as collision.
pub fn point_in_collision(env: &EnvironmentMesh, p: &Point3, clearance: f64) -> Result<bool> {
    if !env.is_watertight() {
        return Err(Error::Unsupported("inside tests need a watertight mesh".into()));
    }
    if env.is_empty() {
        return Ok(false);
    }
    if let Some((lo, hi)) = env.bounding_box() {
        let margin = clearance.max(0.0) + SURFACE_EPS;
        if (0..3).any(|i| p[i] < lo[i] - margin || p[i] > hi[i] + margin) {
            return Ok(false);
        }
    }
    Ok(env.distance(p) <= clearance.max(0.0) + SURFACE_EPS || env.contains(p))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub estimate: f64,
    pub std_error: f64,
    pub samples: usize,
}

/// Fraction of mixture samples in collision, with its binomial standard
/// error.
pub fn mc_collision_estimate(g: &Gmm3, env: &EnvironmentMesh, samples: usize, seed: u64) -> Result<McEstimate> {
    if samples < 1000 {
        return Err(Error::invalid("at least 1000 samples are required"));
    }
    if !env.is_watertight() {
        return Err(Error::Unsupported("Monte-Carlo collision estimates need a watertight mesh".into()));
    }
    let mut hits = 0usize;
    for p in gmm::gmm_sample(g, samples, seed) {
        if point_in_collision(env, &p, 0.0)? {
            hits += 1;
        }
    }
    let estimate = hits as f64 / samples as f64;
    Ok(McEstimate { estimate, std_error: (estimate * (1.0 - estimate) / samples as f64).sqrt(), samples })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gmm::UMatrix;
    use crate::rng;
    use approx::assert_relative_eq;
    use rand::Rng as _;

    fn single(mean: Point3, u: UMatrix) -> Gmm3 {
        Gmm3::new(vec![GaussianComponent::new(1.0, mean, u)]).unwrap()
    }

    fn cube(center: Point3, half: f64) -> EnvironmentMesh {
        let h = Point3::new(half, half, half);
        let (v, t) = box_mesh(center - h, center + h);
        EnvironmentMesh::new(v, t).unwrap()
    }

    #[test]
    fn transform_examples() {
        let (v, t) = box_mesh(Point3::new(0.1, 0.1, 0.1), Point3::new(0.2, 0.3, 0.25));
        let env = EnvironmentMesh::new(v, t).unwrap();
        let c = GaussianComponent::new(1.0, Point3::zeros(), UMatrix::ZERO);
        assert_eq!(transform_environment(&env, &c), env.dense_vertices());

        let mu = env.dense_vertices()[3];
        let c = GaussianComponent::new(1.0, mu, UMatrix::new([0.3, 1.0, -0.5], [0.2, 0.1, -0.4]));
        assert_eq!(transform_environment(&env, &c)[3], Point3::zeros());

        let shifted = GaussianComponent::new(1.0, Point3::new(0.05, 0.0, 0.1), UMatrix::ZERO);
        for (w, v) in transform_environment(&env, &shifted).iter().zip(env.dense_vertices()) {
            assert_eq!(*w, v - shifted.mean);
        }

        // Explicit matrix-vector oracle.
        let mut r = rng::rng(3);
        for _ in 0..20 {
            let vals: Vec<f64> = (0..6).map(|_| r.random_range(-1.0..1.0)).collect();
            let u = UMatrix::from_slice(&vals);
            let mean = Point3::new(r.random(), r.random(), r.random());
            let c = GaussianComponent::new(1.0, mean, u);
            let ub = [
                [vals[0].exp(), vals[3], vals[4]],
                [0.0, vals[1].exp(), vals[5]],
                [0.0, 0.0, vals[2].exp()],
            ];
            for (w, v) in transform_environment(&env, &c).iter().zip(env.dense_vertices()) {
                let d = [v.x - mean.x, v.y - mean.y, v.z - mean.z];
                for row in 0..3 {
                    let expect: f64 = (0..3).map(|k| ub[row][k] * d[k]).sum();
                    assert!((w[row] - expect).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn carving_examples() {
        assert!(carve_convex_region(&[]).constraints.is_empty());
        let r = carve_convex_region(&[Point3::new(2.0, 0.0, 0.0)]);
        assert_eq!(r.constraints, vec![HalfSpace { normal: Point3::x(), offset: 2.0 }]);
        let r = carve_convex_region(&[Point3::new(1.0, 1.0, 0.0), Point3::zeros()]);
        assert!(r.degenerate);
        assert_eq!(r.constraints[0].offset, 0.0);
        // Equidistant points: the lower index wins.
        let r = carve_convex_region(&[Point3::new(0.0, 1.0, 0.0), Point3::new(1.0, 0.0, 0.0)]);
        assert_eq!(r.constraints[0].normal, Point3::y());
    }

    #[test]
    fn carving_separates_every_point() {
        let mut r = rng::rng(8);
        for _ in 0..50 {
            let n = r.random_range(1..200);
            let pts: Vec<Point3> = (0..n)
                .map(|_| Point3::new(r.random_range(-3.0..3.0), r.random_range(-3.0..3.0), r.random_range(-3.0..3.0)))
                .collect();
            let region = carve_convex_region(&pts);
            assert!(region.constraints.len() <= pts.len());
            assert!(region.contains(&Point3::zeros()));
            for h in &region.constraints {
                assert!((h.normal.norm() - 1.0).abs() < 1e-12);
                assert!(h.offset >= 0.0);
            }
            for p in &pts {
                assert!(region.constraints.iter().any(|h| h.normal.dot(p) >= h.offset - 1e-12), "{p} not cut off");
            }
        }
    }

    #[test]
    fn bound_examples() {
        let g = single(Point3::zeros(), UMatrix::ZERO);
        assert_eq!(config_collision_bound(&g, &EnvironmentMesh::empty()).bound, 0.0);
        let region = ConvexRegion { constraints: vec![HalfSpace { normal: Point3::x(), offset: 0.0 }], degenerate: true };
        assert_eq!(region.outside_mass_bound(), 0.5);
        assert_relative_eq!(normal_tail(1.0), 0.158_655_253_931_457_05, max_relative = 1e-12);
    }

    #[test]
    fn flat_wall_bound() {
        // Identity precision scaled down: σ = 0.01 m, wall 0.01 m away → b = 1.
        let u = UMatrix::new([100f64.ln(); 3], [0.0; 3]);
        let g = single(Point3::zeros(), u);
        let (v, t) = plane_mesh(0.01, 0.1, 20);
        let env = EnvironmentMesh::new(v, t).unwrap();
        let b = config_collision_bound(&g, &env);
        assert!(b.bound >= normal_tail(1.0) - 1e-12, "{}", b.bound);
        assert_eq!(b.components[0].constraints, 1);
        assert!(point_in_collision(&env, &Point3::zeros(), 0.0).is_err());
    }

    #[test]
    fn trajectory_bound_examples() {
        assert!((trajectory_collision_bound(&[0.3]) - 0.3).abs() < 1e-15);
        assert_eq!(trajectory_collision_bound(&[0.0, 0.0, 0.0]), 0.0);
        assert_eq!(trajectory_collision_bound(&[0.5, 0.5]), 0.75);
        assert_eq!(trajectory_collision_bound(&[1.0, 0.2]), 1.0);
        assert_eq!(trajectory_collision_bound(&[]), 0.0);
    }

    #[test]
    fn trajectory_bound_is_monotone() {
        let mut r = rng::rng(2);
        let mut states = Vec::new();
        let mut prev = 0.0;
        for _ in 0..100 {
            states.push(r.random_range(0.0..0.05));
            let now = trajectory_collision_bound(&states);
            assert!(now >= prev);
            prev = now;
        }
    }

    #[test]
    fn collision_examples() {
        let (v, t) = box_mesh(Point3::new(-1.0, -1.0, -1.0), Point3::new(1.0, 1.0, 1.0));
        let env = EnvironmentMesh::with_max_edge(v, t, 1.0).unwrap();
        assert!(point_in_collision(&env, &Point3::zeros(), 0.0).unwrap());
        assert!(!point_in_collision(&env, &Point3::new(10.0, 0.0, 0.0), 0.0).unwrap());
        assert!(point_in_collision(&env, &Point3::new(1.0, 0.3, -0.2), 0.0).unwrap());
        assert!(point_in_collision(&env, &Point3::new(1.0, 1.0, 1.0), 0.0).unwrap());
        assert!(!point_in_collision(&env, &Point3::new(1.1, 0.0, 0.0), 0.05).unwrap());
        assert!(point_in_collision(&env, &Point3::new(1.1, 0.0, 0.0), 0.1).unwrap());
    }

    #[test]
    fn mc_examples() {
        let env = cube(Point3::zeros(), 0.05);
        let far = single(Point3::new(1.0, 0.0, 0.0), UMatrix::new([100f64.ln(); 3], [0.0; 3]));
        assert!(mc_collision_estimate(&far, &env, 100_000, 1).unwrap().estimate < 1e-4);
        let inside = single(Point3::new(0.01, 0.0, 0.0), UMatrix::new([1000f64.ln(); 3], [0.0; 3]));
        assert!(mc_collision_estimate(&inside, &env, 100_000, 2).unwrap().estimate > 0.999);
        assert!(mc_collision_estimate(&far, &env, 10, 1).is_err());
        let b = config_collision_bound(&inside, &env);
        assert!(b.components[0].mean_inside && b.bound == 1.0);
    }
}
