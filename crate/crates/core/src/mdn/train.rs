use std::time::Instant;

use rand::seq::{index, SliceRandom};

use super::{accumulate_entry, mdn_forward, MdnParams, TendonConfig};
use crate::error::{Error, Result};
use crate::gmm::{self, Gmm3, Point3};
use crate::rng;

/// Weights strictly below this count as collapsed.
pub const DEFAULT_COLLAPSE_EPSILON: f64 = 1e-3;

/// A model "exhibits collapse" when at least this fraction of evaluated
/// configurations trigger [`detect_mode_collapse`].
pub const COLLAPSE_CONFIG_FRACTION: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "train" => Some(Split::Train),
            "test" => Some(Split::Test),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub id: usize,
    pub config: TendonConfig,
    pub cloud: Vec<Point3>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub split: Split,
    pub entries: Vec<Sample>,
}

impl Dataset {
    pub fn new(split: Split, entries: Vec<Sample>) -> Result<Self> {
        if let Some(s) = entries.iter().find(|s| s.cloud.is_empty()) {
            return Err(Error::invalid(format!("config {} has an empty cloud", s.id)));
        }
        Ok(Self { split, entries })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Mean of every point in every cloud.
    pub fn centroid(&self) -> Option<Point3> {
        let mut sum = Point3::zeros();
        let mut count = 0usize;
        for s in &self.entries {
            for p in &s.cloud {
                sum += p;
            }
            count += s.cloud.len();
        }
        (count > 0).then(|| sum / count as f64)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainHyper {
    pub epochs: usize,
    pub step_size: f64,
    pub batch_size: usize,
    pub points_per_config: usize,
    pub seed: u64,
}

impl Default for TrainHyper {
    fn default() -> Self {
        Self { epochs: 200, step_size: 1e-3, batch_size: 16, points_per_config: 512, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainReport {
    pub train_nll: Vec<f64>,
    /// Empty when no held-out set was supplied.
    pub held_out_nll: Vec<f64>,
    pub epoch_seconds: Vec<f64>,
    /// Fraction of evaluated configurations whose final mixture has a
    /// weight below [`DEFAULT_COLLAPSE_EPSILON`].
    pub collapse_fraction: f64,
    pub mode_collapse: bool,
}

/// True iff any weight is strictly below `epsilon_w`.
pub fn detect_mode_collapse(g: &Gmm3, epsilon_w: f64) -> bool {
    g.weights().any(|w| w < epsilon_w)
}

/// Mean over configurations of the reduced NLL of each full cloud.
pub fn evaluate_nll(p: &MdnParams, data: &Dataset) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::invalid("dataset is empty"));
    }
    let mut total = 0.0;
    for s in &data.entries {
        total += gmm::reduced_nll(&mdn_forward(p, &s.config)?, &s.cloud)?;
    }
    Ok(total / data.len() as f64)
}

fn collapse_fraction(p: &MdnParams, data: &Dataset) -> Result<f64> {
    if data.is_empty() {
        return Ok(0.0);
    }
    let mut hits = 0usize;
    for s in &data.entries {
        if detect_mode_collapse(&mdn_forward(p, &s.config)?, DEFAULT_COLLAPSE_EPSILON) {
            hits += 1;
        }
    }
    Ok(hits as f64 / data.len() as f64)
}

/// Uniform subsample without replacement (the whole cloud if it is small).
fn subsample(cloud: &[Point3], k: usize, rng: &mut rng::Rng) -> Vec<Point3> {
    if cloud.len() <= k {
        return cloud.to_vec();
    }
    index::sample(rng, cloud.len(), k).into_iter().map(|i| cloud[i]).collect()
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(n: usize) -> Self {
        Self { m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }

    fn step(&mut self, theta: &mut [f64], grad: &[f64], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - Self::BETA1.powi(self.t);
        let c2 = 1.0 - Self::BETA2.powi(self.t);
        for (((x, g), m), v) in theta.iter_mut().zip(grad).zip(&mut self.m).zip(&mut self.v) {
            *m = Self::BETA1 * *m + (1.0 - Self::BETA1) * g;
            *v = Self::BETA2 * *v + (1.0 - Self::BETA2) * g * g;
            *x -= lr * (*m / c1) / ((*v / c2).sqrt() + Self::EPS);
        }
    }
}

/// Adam over shuffled mini-batches of configurations. Each epoch draws a
/// fresh subsample of `points_per_config` points from every cloud. The
/// held-out curve is tracked on one fixed subsample per held-out config.
pub fn train(
    init: &MdnParams,
    data: &Dataset,
    held_out: Option<&Dataset>,
    hyper: &TrainHyper,
) -> Result<(MdnParams, TrainReport)> {
    init.validate()?;
    if hyper.batch_size == 0 || hyper.points_per_config == 0 {
        return Err(Error::Config("batch size and points per config must be positive".into()));
    }
    if !(hyper.step_size > 0.0) {
        return Err(Error::Config("step size must be positive".into()));
    }
    if hyper.epochs == 0 {
        return Ok((init.clone(), TrainReport::default()));
    }
    if data.is_empty() {
        return Err(Error::invalid("training set is empty"));
    }

    let mut rng = rng::rng(rng::stage(hyper.seed, "train"));
    let held_out_subsample: Option<Vec<(TendonConfig, Vec<Point3>)>> = held_out.map(|h| {
        let mut hrng = rng::rng(rng::stage(hyper.seed, "held-out"));
        h.entries.iter().map(|s| (s.config.clone(), subsample(&s.cloud, hyper.points_per_config, &mut hrng))).collect()
    });

    let mut params = init.clone();
    let mut theta = params.to_flat();
    let mut adam = Adam::new(theta.len());
    let mut grad = params.zeros_like();
    let mut report = TrainReport::default();
    let mut order: Vec<usize> = (0..data.len()).collect();

    for epoch in 0..hyper.epochs {
        let started = Instant::now();
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(hyper.batch_size) {
            let clouds: Vec<Vec<Point3>> =
                chunk.iter().map(|&i| subsample(&data.entries[i].cloud, hyper.points_per_config, &mut rng)).collect();
            grad.set_flat(&vec![0.0; theta.len()]);
            let scale = 1.0 / chunk.len() as f64;
            let mut batch_loss = 0.0;
            for (&i, cloud) in chunk.iter().zip(&clouds) {
                params.check_input(&data.entries[i].config)?;
                batch_loss += accumulate_entry(&params, &data.entries[i].config.0, cloud, scale, &mut grad);
            }
            let g = grad.to_flat();
            if !batch_loss.is_finite() || g.iter().any(|v| !v.is_finite()) {
                return Err(Error::TrainingDiverged { epoch });
            }
            epoch_loss += batch_loss;
            adam.step(&mut theta, &g, hyper.step_size);
            params.set_flat(&theta);
        }
        epoch_loss /= data.len() as f64;
        if !epoch_loss.is_finite() {
            return Err(Error::TrainingDiverged { epoch });
        }
        report.train_nll.push(epoch_loss);
        if let Some(h) = &held_out_subsample {
            let mut total = 0.0;
            for (d, cloud) in h {
                total += gmm::reduced_nll(&mdn_forward(&params, d)?, cloud)?;
            }
            let v = total / h.len().max(1) as f64;
            if !v.is_finite() {
                return Err(Error::TrainingDiverged { epoch });
            }
            report.held_out_nll.push(v);
        }
        report.epoch_seconds.push(started.elapsed().as_secs_f64());
    }

    report.collapse_fraction = collapse_fraction(&params, held_out.filter(|h| !h.is_empty()).unwrap_or(data))?;
    report.mode_collapse = report.collapse_fraction >= COLLAPSE_CONFIG_FRACTION;
    Ok((params, report))
}
