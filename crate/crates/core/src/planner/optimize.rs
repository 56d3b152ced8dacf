use std::fmt::Write as _;

use rand::Rng as _;
use rand_distr::StandardNormal;

use super::bayes::{pi_acquisition, SurrogateModel};
use super::{BoundEvaluator, Trajectory, DEFAULT_INTERIOR_STATES};
use crate::collision::EnvironmentMesh;
use crate::error::Result;
use crate::gmm::fmt_real;
use crate::mdn::{MdnParams, TendonConfig};
use crate::rng;

/// Surrogate observation noise.
const SURROGATE_NOISE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizeParams {
    pub iterations: usize,
    /// Candidates drawn per iteration.
    pub samples: usize,
    /// Config-space sampling radius around the chosen waypoint.
    pub radius: f64,
    pub xi: f64,
    /// Interpolated states per edge in the trajectory bound.
    pub interior: usize,
    pub d_min: f64,
    pub d_max: f64,
    pub seed: u64,
}

impl Default for OptimizeParams {
    fn default() -> Self {
        Self {
            iterations: 50,
            samples: 20,
            radius: 0.003,
            xi: 0.01,
            interior: DEFAULT_INTERIOR_STATES,
            d_min: 0.0,
            d_max: 0.03,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationLog {
    pub iteration: usize,
    pub waypoint_index: usize,
    pub candidate_bound: f64,
    pub incumbent_bound: f64,
    pub accepted: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizeResult {
    pub trajectory: Trajectory,
    /// Incumbent bound before the first iteration and after each one.
    pub history: Vec<f64>,
    pub log: Vec<IterationLog>,
}

impl OptimizeResult {
    pub fn initial_bound(&self) -> f64 {
        self.history[0]
    }

    pub fn final_bound(&self) -> f64 {
        *self.history.last().expect("history holds the initial bound")
    }

    pub fn log_csv(&self) -> String {
        let mut out = String::from("iteration,waypoint_index,candidate_bound,incumbent_bound,accepted\n");
        for l in &self.log {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                l.iteration,
                l.waypoint_index,
                fmt_real(l.candidate_bound),
                fmt_real(l.incumbent_bound),
                l.accepted
            );
        }
        out
    }
}

/// Uniform draw from the ball of radius `r` about `center`, clamped to the
/// displacement limits.
fn sample_ball(center: &TendonConfig, r: f64, lo: f64, hi: f64, rng: &mut rng::Rng) -> TendonConfig {
    let m = center.len();
    let dir: Vec<f64> = (0..m).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
    let radius = r * rng.random::<f64>().powf(1.0 / m as f64);
    TendonConfig(center.0.iter().zip(&dir).map(|(c, d)| (c + radius * d / norm).clamp(lo, hi)).collect())
}

/// Refines intermediate waypoints one at a time. Each iteration picks the
/// waypoint whose neighborhood carries the largest bound, scores random
/// neighbors by probability of improvement and keeps the best-scoring one
/// only if it strictly lowers the whole-trajectory bound.
pub fn optimize_trajectory(traj: &Trajectory, env: &EnvironmentMesh, model: &MdnParams, params: &OptimizeParams) -> Result<OptimizeResult> {
    let eval = BoundEvaluator::new(model, env, params.interior);
    let mut current = traj.clone();
    let mut bounds = eval.trajectory(&current)?;
    let mut incumbent = bounds.total();
    let mut history = vec![incumbent];
    let mut log = Vec::with_capacity(params.iterations);
    let n = current.len();
    let mut surrogates: Vec<SurrogateModel> = (0..n).map(|_| SurrogateModel::new(params.radius / 2.0, SURROGATE_NOISE)).collect();
    let base = rng::stage(params.seed, "optimize");

    for iter in 0..params.iterations {
        if n < 3 {
            history.push(incumbent);
            continue;
        }
        let mut rng = rng::rng_for(base, iter as u64);
        let mut k = 1;
        let mut best_share = f64::NEG_INFINITY;
        for j in 1..n - 1 {
            let share = bounds.around(j);
            if share > best_share {
                best_share = share;
                k = j;
            }
        }
        if surrogates[k].observations.is_empty() {
            surrogates[k].observe(current.waypoints[k].clone(), incumbent);
        }
        let candidates: Vec<TendonConfig> =
            (0..params.samples.max(1)).map(|_| sample_ball(&current.waypoints[k], params.radius, params.d_min, params.d_max, &mut rng)).collect();
        let chosen = pi_acquisition(&surrogates[k], &candidates, incumbent, params.xi)?;
        let candidate = &candidates[chosen];
        let next = eval.with_replacement(&current, &bounds, k, candidate)?;
        let candidate_bound = next.total();
        surrogates[k].observe(candidate.clone(), candidate_bound);
        let accepted = candidate_bound < incumbent;
        if accepted {
            current.waypoints[k] = candidate.clone();
            bounds = next;
            incumbent = candidate_bound;
            // Neighbors' edges changed, so their observations are stale.
            for (j, s) in surrogates.iter_mut().enumerate() {
                if j != k {
                    s.clear();
                }
            }
        }
        log.push(IterationLog { iteration: iter, waypoint_index: k, candidate_bound, incumbent_bound: incumbent, accepted });
        history.push(incumbent);
    }
    Ok(OptimizeResult { trajectory: current, history, log })
}
