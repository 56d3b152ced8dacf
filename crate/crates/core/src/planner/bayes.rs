//! Gaussian-process surrogate and the probability-of-improvement score.

use nalgebra::{DMatrix, DVector};

use crate::collision::normal_tail;
use crate::error::{Error, Result};
use crate::mdn::TendonConfig;

/// Posterior standard deviations below this are treated as exact.
pub const DEGENERATE_STD: f64 = 1e-12;

/// Floor on the signal variance inferred from the observations.
const MIN_SIGNAL_VARIANCE: f64 = 1e-4;

/// GP with a squared-exponential kernel and a constant prior mean equal to
/// the observation mean. The signal variance is the observation variance,
/// floored so a single observation still yields a usable prior.
#[derive(Debug, Clone, PartialEq)]
pub struct SurrogateModel {
    pub observations: Vec<(TendonConfig, f64)>,
    pub lengthscale: f64,
    pub noise_variance: f64,
}

struct Posterior {
    prior_mean: f64,
    signal_variance: f64,
    chol: nalgebra::Cholesky<f64, nalgebra::Dyn>,
    alpha: DVector<f64>,
}

impl SurrogateModel {
    pub fn new(lengthscale: f64, noise_variance: f64) -> Self {
        Self { observations: Vec::new(), lengthscale, noise_variance }
    }

    pub fn observe(&mut self, x: TendonConfig, y: f64) {
        self.observations.push((x, y));
    }

    pub fn clear(&mut self) {
        self.observations.clear();
    }

    pub fn signal_variance(&self) -> f64 {
        let n = self.observations.len() as f64;
        if n == 0.0 {
            return MIN_SIGNAL_VARIANCE;
        }
        let mean = self.observations.iter().map(|o| o.1).sum::<f64>() / n;
        let var = self.observations.iter().map(|o| (o.1 - mean).powi(2)).sum::<f64>() / n;
        var.max(MIN_SIGNAL_VARIANCE)
    }

    fn kernel(&self, a: &TendonConfig, b: &TendonConfig, s2: f64) -> f64 {
        let d2 = a.0.iter().zip(&b.0).map(|(x, y)| (x - y).powi(2)).sum::<f64>();
        s2 * (-0.5 * d2 / (self.lengthscale * self.lengthscale)).exp()
    }

    fn posterior(&self) -> Result<Posterior> {
        if self.observations.is_empty() {
            return Err(Error::invalid("the surrogate has no observations"));
        }
        let n = self.observations.len();
        let s2 = self.signal_variance();
        let prior_mean = self.observations.iter().map(|o| o.1).sum::<f64>() / n as f64;
        let k = DMatrix::from_fn(n, n, |i, j| self.kernel(&self.observations[i].0, &self.observations[j].0, s2));
        let y = DVector::from_iterator(n, self.observations.iter().map(|o| o.1 - prior_mean));
        let mut jitter = self.noise_variance.max(0.0);
        for _ in 0..5 {
            let mut kj = k.clone();
            for i in 0..n {
                kj[(i, i)] += jitter.max(1e-12 * s2);
            }
            if let Some(chol) = kj.cholesky() {
                let alpha = chol.solve(&y);
                return Ok(Posterior { prior_mean, signal_variance: s2, chol, alpha });
            }
            jitter = (jitter * 10.0).max(1e-10);
        }
        Err(Error::Numerical("kernel matrix is not positive-definite after jitter".into()))
    }

    /// Posterior mean and standard deviation at `x`.
    pub fn predict(&self, x: &TendonConfig) -> Result<(f64, f64)> {
        let post = self.posterior()?;
        Ok(self.predict_with(&post, x))
    }

    fn predict_with(&self, post: &Posterior, x: &TendonConfig) -> (f64, f64) {
        let n = self.observations.len();
        let kx = DVector::from_iterator(n, self.observations.iter().map(|o| self.kernel(&o.0, x, post.signal_variance)));
        let mean = post.prior_mean + kx.dot(&post.alpha);
        let v = post.chol.l().solve_lower_triangular(&kx).expect("Cholesky factor is non-singular");
        let var = (post.signal_variance - v.dot(&v)).max(0.0);
        (mean, var.sqrt())
    }
}

/// `Φ((f_best − ξ − m) / σ)`; with `σ` below [`DEGENERATE_STD`] it is 1
/// when `m < f_best − ξ` and 0 otherwise.
pub fn probability_of_improvement(mean: f64, std: f64, f_best: f64, xi: f64) -> f64 {
    let target = f_best - xi;
    if std < DEGENERATE_STD {
        return if mean < target { 1.0 } else { 0.0 };
    }
    normal_tail(-(target - mean) / std)
}

/// Index of the candidate with the highest probability of improvement,
/// lowest index on ties.
pub fn pi_acquisition(s: &SurrogateModel, candidates: &[TendonConfig], f_best: f64, xi: f64) -> Result<usize> {
    if candidates.is_empty() {
        return Err(Error::invalid("no candidates to score"));
    }
    let post = s.posterior()?;
    let mut best = (f64::NEG_INFINITY, 0usize);
    for (i, c) in candidates.iter().enumerate() {
        let (m, sd) = s.predict_with(&post, c);
        let pi = probability_of_improvement(m, sd, f_best, xi);
        if pi > best.0 {
            best = (pi, i);
        }
    }
    Ok(best.1)
}
