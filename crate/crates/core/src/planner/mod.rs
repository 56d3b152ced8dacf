//! Roadmap planning with mixture-mean collision checks, and waypoint
//! refinement against the trajectory collision bound.

mod bayes;
mod optimize;
mod prm;

use std::fmt::Write as _;

use crate::collision::{config_collision_bound, point_in_collision, trajectory_collision_bound, EnvironmentMesh};
use crate::error::{Error, Result};
use crate::gmm::{fmt_real, line_offsets, Gmm3};
use crate::mdn::{mdn_forward, MdnParams, TendonConfig};

pub use bayes::{probability_of_improvement, pi_acquisition, SurrogateModel, DEGENERATE_STD};
pub use optimize::{optimize_trajectory, IterationLog, OptimizeParams, OptimizeResult};
pub use prm::{prm_build, prm_query, Roadmap, PrmParams};

/// Interior states per trajectory edge used by the trajectory bound.
pub const DEFAULT_INTERIOR_STATES: usize = 10;

/// True when any component mean is in collision (surface included).
pub fn mean_collision_check(g: &Gmm3, env: &EnvironmentMesh) -> Result<bool> {
    for m in g.means() {
        if point_in_collision(env, m, 0.0)? {
            return Ok(true);
        }
    }
    Ok(false)
}

/// Runs the network and checks its means.
pub(crate) fn config_in_collision(model: &MdnParams, env: &EnvironmentMesh, d: &TendonConfig) -> Result<bool> {
    mean_collision_check(&mdn_forward(model, d)?, env)
}

/// Every config strictly between `a` and `b` at spacing at most `step`.
pub(crate) fn interpolate<'a>(a: &'a TendonConfig, b: &'a TendonConfig, step: f64) -> impl Iterator<Item = TendonConfig> + 'a {
    let pieces = ((a.distance(b) / step).ceil() as usize).max(1);
    (1..pieces).map(move |j| a.lerp(b, j as f64 / pieces as f64))
}

pub(crate) fn segment_is_free(model: &MdnParams, env: &EnvironmentMesh, a: &TendonConfig, b: &TendonConfig, step: f64) -> Result<bool> {
    for c in interpolate(a, b, step) {
        if config_in_collision(model, env, &c)? {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Ordered waypoints; the first and last are never moved by optimization.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub waypoints: Vec<TendonConfig>,
}

impl Trajectory {
    pub fn new(waypoints: Vec<TendonConfig>) -> Result<Self> {
        if waypoints.len() < 2 {
            return Err(Error::invalid("a trajectory needs at least two waypoints"));
        }
        let m = waypoints[0].len();
        if waypoints.iter().any(|w| w.len() != m) {
            return Err(Error::invalid("waypoints differ in dimension"));
        }
        Ok(Self { waypoints })
    }

    pub fn len(&self) -> usize {
        self.waypoints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.waypoints.is_empty()
    }

    /// Waypoints interleaved with `interior` evenly spaced states per edge.
    pub fn states(&self, interior: usize) -> Vec<TendonConfig> {
        let mut out = Vec::with_capacity(self.len() + (self.len() - 1) * interior);
        for (k, w) in self.waypoints.iter().enumerate() {
            out.push(w.clone());
            if let Some(next) = self.waypoints.get(k + 1) {
                out.extend(edge_interior(w, next, interior));
            }
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let m = self.waypoints[0].len();
        let header: Vec<String> = (1..=m).map(|i| format!("d{i}")).collect();
        let mut out = header.join(",") + "\n";
        for w in &self.waypoints {
            let row: Vec<String> = w.0.iter().map(|v| fmt_real(*v)).collect();
            let _ = writeln!(out, "{}", row.join(","));
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = line_offsets(text).filter(|(_, l)| !l.trim().is_empty());
        let (off, header) = lines.next().ok_or(Error::Parse { offset: 0, message: "empty trajectory file".into() })?;
        let cols = header.split(',').count();
        if !header.split(',').enumerate().all(|(i, h)| h.trim() == format!("d{}", i + 1)) {
            return Err(Error::Parse { offset: off, message: "expected header `d1,d2,...`".into() });
        }
        let mut waypoints = Vec::new();
        for (off, line) in lines {
            let v: Vec<f64> = line
                .split(',')
                .map(|f| f.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Parse { offset: off, message: format!("bad value: {e}") })?;
            if v.len() != cols {
                return Err(Error::Parse { offset: off, message: format!("expected {cols} columns") });
            }
            waypoints.push(TendonConfig(v));
        }
        Trajectory::new(waypoints)
    }
}

fn edge_interior<'a>(a: &'a TendonConfig, b: &'a TendonConfig, interior: usize) -> impl Iterator<Item = TendonConfig> + 'a {
    (1..=interior).map(move |j| a.lerp(b, j as f64 / (interior + 1) as f64))
}

/// Per-state collision bounds of a trajectory, kept per waypoint and per
/// edge so that moving one waypoint only re-evaluates its neighborhood.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryBounds {
    pub waypoints: Vec<f64>,
    pub edges: Vec<Vec<f64>>,
}

impl TrajectoryBounds {
    /// `1 − Π(1 − p)` over every state, in trajectory order.
    pub fn total(&self) -> f64 {
        let mut states = Vec::with_capacity(self.waypoints.len() * 11);
        for (k, w) in self.waypoints.iter().enumerate() {
            states.push(*w);
            if let Some(e) = self.edges.get(k) {
                states.extend_from_slice(e);
            }
        }
        trajectory_collision_bound(&states)
    }

    /// Bound restricted to waypoint `k` and the interiors of its two edges.
    pub fn around(&self, k: usize) -> f64 {
        let mut states = vec![self.waypoints[k]];
        if k > 0 {
            states.extend_from_slice(&self.edges[k - 1]);
        }
        if let Some(e) = self.edges.get(k) {
            states.extend_from_slice(e);
        }
        trajectory_collision_bound(&states)
    }
}

/// Evaluates collision bounds of configurations through the network.
pub struct BoundEvaluator<'a> {
    pub model: &'a MdnParams,
    pub env: &'a EnvironmentMesh,
    pub interior: usize,
}

impl<'a> BoundEvaluator<'a> {
    pub fn new(model: &'a MdnParams, env: &'a EnvironmentMesh, interior: usize) -> Self {
        Self { model, env, interior }
    }

    pub fn state(&self, d: &TendonConfig) -> Result<f64> {
        Ok(config_collision_bound(&mdn_forward(self.model, d)?, self.env).bound)
    }

    fn edge(&self, a: &TendonConfig, b: &TendonConfig) -> Result<Vec<f64>> {
        edge_interior(a, b, self.interior).map(|c| self.state(&c)).collect()
    }

    pub fn trajectory(&self, traj: &Trajectory) -> Result<TrajectoryBounds> {
        let waypoints = traj.waypoints.iter().map(|w| self.state(w)).collect::<Result<_>>()?;
        let edges = traj.waypoints.windows(2).map(|w| self.edge(&w[0], &w[1])).collect::<Result<_>>()?;
        Ok(TrajectoryBounds { waypoints, edges })
    }

    /// Bounds after replacing waypoint `k` with `candidate`.
    pub fn with_replacement(&self, traj: &Trajectory, current: &TrajectoryBounds, k: usize, candidate: &TendonConfig) -> Result<TrajectoryBounds> {
        let mut next = current.clone();
        next.waypoints[k] = self.state(candidate)?;
        if k > 0 {
            next.edges[k - 1] = self.edge(&traj.waypoints[k - 1], candidate)?;
        }
        if k + 1 < traj.len() {
            next.edges[k] = self.edge(candidate, &traj.waypoints[k + 1])?;
        }
        Ok(next)
    }
}

/// Trajectory bound over waypoints plus `interior` states per edge.
pub fn trajectory_bound(model: &MdnParams, env: &EnvironmentMesh, traj: &Trajectory, interior: usize) -> Result<f64> {
    Ok(BoundEvaluator::new(model, env, interior).trajectory(traj)?.total())
}
