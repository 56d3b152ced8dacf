//! Mixture density network: a dense trunk followed by three independent
//! dense heads producing mixture logits, component means and the six
//! unconstrained precision-factor entries per component.
//!
//! Gradients are derived by hand for this fixed topology.

mod io;
mod train;

use std::fmt;

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::gmm::{self, GaussianComponent, Gmm3, Point3, UMatrix};
use crate::rng;

pub use io::{load_params, save_params};
pub use train::{
    detect_mode_collapse, evaluate_nll, train, Dataset, Sample, Split, TrainHyper, TrainReport,
    COLLAPSE_CONFIG_FRACTION, DEFAULT_COLLAPSE_EPSILON,
};

/// Tendon displacements in meters, one entry per tendon.
#[derive(Debug, Clone, PartialEq)]
pub struct TendonConfig(pub Vec<f64>);

impl TendonConfig {
    pub fn new(d: Vec<f64>) -> Self {
        Self(d)
    }

    pub fn zeros(m: usize) -> Self {
        Self(vec![0.0; m])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn distance(&self, other: &TendonConfig) -> f64 {
        self.0.iter().zip(&other.0).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt()
    }

    /// Linear interpolation, `t = 0` is `self`.
    pub fn lerp(&self, other: &TendonConfig, t: f64) -> TendonConfig {
        TendonConfig(self.0.iter().zip(&other.0).map(|(a, b)| a + t * (b - a)).collect())
    }

    pub fn within(&self, lo: f64, hi: f64) -> bool {
        self.0.iter().all(|d| d.is_finite() && *d >= lo && *d <= hi)
    }

    pub fn clamped(&self, lo: f64, hi: f64) -> TendonConfig {
        TendonConfig(self.0.iter().map(|d| d.clamp(lo, hi)).collect())
    }
}

impl fmt::Display for TendonConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|d| format!("{d:.6}")).collect();
        write!(f, "({})", parts.join(", "))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Tanh,
    Identity,
}

impl Activation {
    #[inline]
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
            Activation::Identity => x,
        }
    }

    /// Derivative expressed through the activation's output.
    #[inline]
    fn slope(self, y: f64) -> f64 {
        match self {
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - y * y,
            Activation::Identity => 1.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
            Activation::Identity => "identity",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "relu" => Some(Activation::Relu),
            "tanh" => Some(Activation::Tanh),
            "identity" => Some(Activation::Identity),
            _ => None,
        }
    }
}

/// A fully connected layer, `y = act(W x + b)` with `W` stored row-major
/// (`rows` outputs by `cols` inputs).
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub rows: usize,
    pub cols: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl Dense {
    pub fn zeros(rows: usize, cols: usize, activation: Activation) -> Self {
        Self { rows, cols, weights: vec![0.0; rows * cols], bias: vec![0.0; rows], activation }
    }

    fn glorot(rows: usize, cols: usize, activation: Activation, rng: &mut rng::Rng) -> Self {
        let limit = (6.0 / (rows + cols) as f64).sqrt();
        let weights = (0..rows * cols).map(|_| rng.random_range(-limit..limit)).collect();
        Self { rows, cols, weights, bias: vec![0.0; rows], activation }
    }

    fn forward_into(&self, input: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend(self.weights.chunks_exact(self.cols).zip(&self.bias).map(|(row, b)| {
            let s: f64 = row.iter().zip(input).map(|(w, x)| w * x).sum();
            self.activation.apply(s + b)
        }));
    }

    /// Accumulates parameter gradients into `grad` given the layer input,
    /// its output and `d_out = dL/d(output)`. Returns `dL/d(input)`.
    fn backward(&self, input: &[f64], output: &[f64], d_out: &[f64], grad: &mut Dense) -> Vec<f64> {
        let mut d_in = vec![0.0; self.cols];
        for r in 0..self.rows {
            let g = d_out[r] * self.activation.slope(output[r]);
            if g == 0.0 {
                continue;
            }
            grad.bias[r] += g;
            let row = &self.weights[r * self.cols..(r + 1) * self.cols];
            let grow = &mut grad.weights[r * self.cols..(r + 1) * self.cols];
            for c in 0..self.cols {
                grow[c] += g * input[c];
                d_in[c] += g * row[c];
            }
        }
        d_in
    }

    fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }
}

/// Layer sizes and activation for a freshly initialized network.
#[derive(Debug, Clone, PartialEq)]
pub struct Architecture {
    pub inputs: usize,
    pub components: usize,
    pub trunk: Vec<usize>,
    pub head: Vec<usize>,
    pub activation: Activation,
}

impl Architecture {
    pub fn with_components(components: usize) -> Self {
        Self { components, ..Self::default() }
    }
}

impl Default for Architecture {
    fn default() -> Self {
        Self { inputs: 4, components: 5, trunk: vec![128, 128], head: vec![64], activation: Activation::Relu }
    }
}

/// Which of the three heads a layer stack belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Head {
    Weights,
    Means,
    Precision,
}

impl Head {
    pub const ALL: [Head; 3] = [Head::Weights, Head::Means, Head::Precision];

    pub fn outputs_per_component(self) -> usize {
        match self {
            Head::Weights => 1,
            Head::Means => 3,
            Head::Precision => 6,
        }
    }
}

/// Network parameters. Also used as the gradient container, since the
/// gradient has exactly the same shape.
#[derive(Debug, Clone, PartialEq)]
pub struct MdnParams {
    pub inputs: usize,
    pub components: usize,
    pub trunk: Vec<Dense>,
    pub heads: [Vec<Dense>; 3],
}

/// Intermediate activations kept for the backward pass.
struct Trace {
    trunk: Vec<Vec<f64>>,
    heads: [Vec<Vec<f64>>; 3],
}

impl Trace {
    fn head_output(&self, h: Head) -> &[f64] {
        self.heads[h as usize].last().expect("head has at least one layer")
    }
}

impl MdnParams {
    /// Glorot-uniform weights, zero biases. When `centroid` is given, the
    /// means head's final bias starts at that point for every component.
    pub fn init(arch: &Architecture, centroid: Option<Point3>, seed: u64) -> Result<Self> {
        if arch.inputs == 0 || arch.components == 0 {
            return Err(Error::Config("network needs at least one input and one component".into()));
        }
        if arch.trunk.iter().chain(&arch.head).any(|&s| s == 0) {
            return Err(Error::Config("layer sizes must be positive".into()));
        }
        let mut rng = rng::rng(seed);
        let mut trunk = Vec::new();
        let mut width = arch.inputs;
        for &s in &arch.trunk {
            trunk.push(Dense::glorot(s, width, arch.activation, &mut rng));
            width = s;
        }
        let trunk_out = width;
        let heads = Head::ALL.map(|h| {
            let mut layers = Vec::new();
            let mut width = trunk_out;
            for &s in &arch.head {
                layers.push(Dense::glorot(s, width, arch.activation, &mut rng));
                width = s;
            }
            layers.push(Dense::glorot(h.outputs_per_component() * arch.components, width, Activation::Identity, &mut rng));
            layers
        });
        let mut p = Self { inputs: arch.inputs, components: arch.components, trunk, heads };
        if let Some(c) = centroid {
            let last = p.heads[Head::Means as usize].last_mut().expect("non-empty head");
            for (i, b) in last.bias.iter_mut().enumerate() {
                *b = c[i % 3];
            }
        }
        Ok(p)
    }

    /// Same shape, every parameter zero.
    pub fn zeros_like(&self) -> Self {
        let z = |layers: &Vec<Dense>| layers.iter().map(|l| Dense::zeros(l.rows, l.cols, l.activation)).collect();
        Self {
            inputs: self.inputs,
            components: self.components,
            trunk: z(&self.trunk),
            heads: [z(&self.heads[0]), z(&self.heads[1]), z(&self.heads[2])],
        }
    }

    pub fn head(&self, h: Head) -> &[Dense] {
        &self.heads[h as usize]
    }

    fn layers(&self) -> impl Iterator<Item = &Dense> {
        self.trunk.iter().chain(self.heads.iter().flatten())
    }

    fn layers_mut(&mut self) -> impl Iterator<Item = &mut Dense> {
        self.trunk.iter_mut().chain(self.heads.iter_mut().flatten())
    }

    pub fn param_count(&self) -> usize {
        self.layers().map(Dense::param_count).sum()
    }

    /// All parameters in file order: per layer, weights then biases.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for l in self.layers() {
            out.extend_from_slice(&l.weights);
            out.extend_from_slice(&l.bias);
        }
        out
    }

    pub fn set_flat(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.param_count(), "flat parameter vector has the wrong length");
        let mut off = 0;
        for l in self.layers_mut() {
            let nw = l.weights.len();
            l.weights.copy_from_slice(&flat[off..off + nw]);
            off += nw;
            let nb = l.bias.len();
            l.bias.copy_from_slice(&flat[off..off + nb]);
            off += nb;
        }
    }

    /// Checks that every layer chains onto the previous one and that each
    /// head ends in the right number of outputs.
    pub fn validate(&self) -> Result<()> {
        if self.components == 0 {
            return Err(Error::Shape("component count is zero".into()));
        }
        let check_stack = |layers: &[Dense], mut width: usize, name: &str| -> Result<usize> {
            for (i, l) in layers.iter().enumerate() {
                if l.cols != width {
                    return Err(Error::Shape(format!("{name} layer {i} expects {} inputs, previous width is {width}", l.cols)));
                }
                if l.weights.len() != l.rows * l.cols || l.bias.len() != l.rows {
                    return Err(Error::Shape(format!("{name} layer {i} buffers do not match {}x{}", l.rows, l.cols)));
                }
                width = l.rows;
            }
            Ok(width)
        };
        let trunk_out = check_stack(&self.trunk, self.inputs, "trunk")?;
        for h in Head::ALL {
            let layers = self.head(h);
            if layers.is_empty() {
                return Err(Error::Shape(format!("{h:?} head has no layers")));
            }
            let out = check_stack(layers, trunk_out, &format!("{h:?} head"))?;
            let want = h.outputs_per_component() * self.components;
            if out != want {
                return Err(Error::Shape(format!("{h:?} head emits {out} values, expected {want}")));
            }
        }
        Ok(())
    }

    fn trace(&self, d: &[f64]) -> Trace {
        let mut trunk = Vec::with_capacity(self.trunk.len() + 1);
        trunk.push(d.to_vec());
        for l in &self.trunk {
            let mut out = Vec::with_capacity(l.rows);
            l.forward_into(trunk.last().expect("non-empty"), &mut out);
            trunk.push(out);
        }
        let features = trunk.last().expect("non-empty");
        let heads = [0, 1, 2].map(|h| {
            let mut acts: Vec<Vec<f64>> = Vec::with_capacity(self.heads[h].len());
            for l in &self.heads[h] {
                let mut out = Vec::with_capacity(l.rows);
                l.forward_into(acts.last().unwrap_or(features), &mut out);
                acts.push(out);
            }
            acts
        });
        Trace { trunk, heads }
    }

    fn check_input(&self, d: &TendonConfig) -> Result<()> {
        if d.len() != self.inputs {
            return Err(Error::Shape(format!("network takes {} tendon values, got {}", self.inputs, d.len())));
        }
        if !d.0.iter().all(|v| v.is_finite()) {
            return Err(Error::invalid("tendon configuration has non-finite entries"));
        }
        Ok(())
    }
}

/// Raw head outputs turned into mixture parameters.
struct HeadOutputs {
    log_weights: Vec<f64>,
    weights: Vec<f64>,
    means: Vec<Point3>,
    us: Vec<UMatrix>,
}

impl HeadOutputs {
    fn from_trace(p: &MdnParams, t: &Trace) -> Self {
        let logits = t.head_output(Head::Weights);
        let lse = gmm::log_sum_exp(logits);
        let log_weights: Vec<f64> = logits.iter().map(|z| z - lse).collect();
        let weights = log_weights.iter().map(|l| l.exp()).collect();
        let means = t.head_output(Head::Means).chunks_exact(3).map(|m| Point3::new(m[0], m[1], m[2])).collect();
        let us = t.head_output(Head::Precision).chunks_exact(6).map(UMatrix::from_slice).collect();
        debug_assert_eq!(log_weights.len(), p.components);
        Self { log_weights, weights, means, us }
    }

    fn to_gmm(&self) -> Result<Gmm3> {
        let comps = self
            .weights
            .iter()
            .zip(&self.means)
            .zip(&self.us)
            .map(|((w, m), u)| GaussianComponent::new(*w, *m, *u))
            .collect();
        Gmm3::new(comps)
    }
}

/// Evaluates the network on one configuration.
pub fn mdn_forward(p: &MdnParams, d: &TendonConfig) -> Result<Gmm3> {
    p.validate()?;
    p.check_input(d)?;
    let t = p.trace(&d.0);
    HeadOutputs::from_trace(p, &t).to_gmm()
}

/// Mean over entries of the reduced negative log-likelihood of each cloud
/// under the network's mixture for that entry's configuration.
pub fn mdn_loss(p: &MdnParams, batch: &[(&TendonConfig, &[Point3])]) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::invalid("batch is empty"));
    }
    let mut total = 0.0;
    for (d, cloud) in batch {
        total += gmm::reduced_nll(&mdn_forward(p, d)?, cloud)?;
    }
    Ok(total / batch.len() as f64)
}

/// Exact gradient of [`mdn_loss`], returned together with the loss value.
pub fn mdn_grad(p: &MdnParams, batch: &[(&TendonConfig, &[Point3])]) -> Result<(f64, MdnParams)> {
    if batch.is_empty() {
        return Err(Error::invalid("batch is empty"));
    }
    p.validate()?;
    let mut grad = p.zeros_like();
    let scale = 1.0 / batch.len() as f64;
    let mut loss = 0.0;
    for (d, cloud) in batch {
        p.check_input(d)?;
        if cloud.is_empty() {
            return Err(Error::invalid("point cloud is empty"));
        }
        loss += accumulate_entry(p, &d.0, cloud, scale, &mut grad);
    }
    Ok((loss * scale, grad))
}

/// Forward, loss and backward for one (configuration, cloud) entry. Adds
/// `scale · ∂nll/∂θ` into `grad` and returns the entry's reduced NLL.
fn accumulate_entry(p: &MdnParams, d: &[f64], cloud: &[Point3], scale: f64, grad: &mut MdnParams) -> f64 {
    let n = p.components;
    let t = p.trace(d);
    let out = HeadOutputs::from_trace(p, &t);
    let exp_diag: Vec<[f64; 3]> = out.us.iter().map(|u| u.diag.map(f64::exp)).collect();
    let log_det: Vec<f64> = out.us.iter().map(UMatrix::log_sqrt_det).collect();

    let mut d_logits = vec![0.0; n];
    let mut d_means = vec![0.0; 3 * n];
    let mut d_us = vec![0.0; 6 * n];
    let mut ell = vec![0.0; n];
    let mut resid = vec![(Point3::zeros(), Point3::zeros()); n];
    let mut nll = 0.0;

    for x in cloud {
        for i in 0..n {
            let xt = x - out.means[i];
            let r = out.us[i].whiten(&xt);
            ell[i] = out.log_weights[i] + log_det[i] - 0.5 * r.norm_squared();
            resid[i] = (xt, r);
        }
        let lse = gmm::log_sum_exp(&ell);
        nll -= lse;
        for i in 0..n {
            let gamma = (ell[i] - lse).exp();
            d_logits[i] += out.weights[i] - gamma;
            if gamma == 0.0 {
                continue;
            }
            let (xt, r) = resid[i];
            let [e1, e2, e3] = exp_diag[i];
            let [u12, u13, u23] = out.us[i].upper;
            // dL/dμ = −γ Ūᵀ r
            d_means[3 * i] -= gamma * (e1 * r.x);
            d_means[3 * i + 1] -= gamma * (u12 * r.x + e2 * r.y);
            d_means[3 * i + 2] -= gamma * (u13 * r.x + u23 * r.y + e3 * r.z);
            let du = &mut d_us[6 * i..6 * i + 6];
            du[0] -= gamma * (1.0 - r.x * e1 * xt.x);
            du[1] -= gamma * (1.0 - r.y * e2 * xt.y);
            du[2] -= gamma * (1.0 - r.z * e3 * xt.z);
            du[3] += gamma * r.x * xt.y;
            du[4] += gamma * r.x * xt.z;
            du[5] += gamma * r.y * xt.z;
        }
    }

    let w = scale / cloud.len() as f64;
    let head_grads = [d_logits, d_means, d_us].map(|mut v| {
        v.iter_mut().for_each(|g| *g *= w);
        v
    });

    let features = t.trunk.last().expect("non-empty");
    let mut d_features = vec![0.0; features.len()];
    for (h, d_out) in head_grads.into_iter().enumerate() {
        let layers = &p.heads[h];
        let acts = &t.heads[h];
        let mut upstream = d_out;
        for li in (0..layers.len()).rev() {
            let input = if li == 0 { features } else { &acts[li - 1] };
            upstream = layers[li].backward(input, &acts[li], &upstream, &mut grad.heads[h][li]);
        }
        for (a, b) in d_features.iter_mut().zip(&upstream) {
            *a += b;
        }
    }
    let mut upstream = d_features;
    for li in (0..p.trunk.len()).rev() {
        upstream = p.trunk[li].backward(&t.trunk[li], &t.trunk[li + 1], &upstream, &mut grad.trunk[li]);
    }
    nll / cloud.len() as f64
}
