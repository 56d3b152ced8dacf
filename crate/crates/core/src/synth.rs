//! Synthetic stochastic tendon robot used as the ground-truth data source.
//!
//! The backbone is a constant-curvature arc whose bending plane is set by
//! the three parallel tendons and twisted along arclength by the helical
//! tendon. Approach-history dependence comes from a hysteresis offset on
//! the effective displacements, and every cloud point is a tube-surface
//! sample with isotropic sensor noise.

use std::f64::consts::TAU;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::error::{Error, Result};
use crate::gmm::{fmt_real, Point3};
use crate::mdn::{Dataset, Sample, Split, TendonConfig};
use crate::rng;

/// cos/sin of the parallel tendon angles 0°, 120°, 240°.
const TENDON_COS: [f64; 3] = [1.0, -0.5, -0.5];
const TENDON_SIN: [f64; 3] = [0.0, 0.866_025_403_784_438_6, -0.866_025_403_784_438_6];

/// Plane twist per unit helical displacement, relative to `r_t`.
const HELICAL_TWIST: f64 = 0.5;

#[derive(Debug, Clone, PartialEq)]
pub struct RobotSpec {
    pub length: f64,
    pub tendon_radius: f64,
    pub body_radius: f64,
    pub d_min: f64,
    pub d_max: f64,
    pub hysteresis: f64,
    pub sensor_noise: f64,
}

impl Default for RobotSpec {
    fn default() -> Self {
        Self {
            length: 0.2,
            tendon_radius: 0.01,
            body_radius: 0.005,
            d_min: 0.0,
            d_max: 0.03,
            hysteresis: 0.0015,
            sensor_noise: 0.001,
        }
    }
}

impl RobotSpec {
    pub const TENDONS: usize = 4;

    pub fn validate(&self) -> Result<()> {
        let positive = [self.length, self.tendon_radius, self.body_radius];
        if positive.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::invalid("robot dimensions must be positive"));
        }
        if !(self.hysteresis >= 0.0 && self.sensor_noise >= 0.0) {
            return Err(Error::invalid("noise scales must be non-negative"));
        }
        if !(self.d_min.is_finite() && self.d_max.is_finite() && self.d_min < self.d_max) {
            return Err(Error::invalid("displacement limits must be ordered"));
        }
        Ok(())
    }

    pub fn range(&self) -> f64 {
        self.d_max - self.d_min
    }

    pub fn contains(&self, d: &TendonConfig) -> bool {
        d.len() == Self::TENDONS && d.within(self.d_min, self.d_max)
    }

    pub fn clamp(&self, d: &TendonConfig) -> TendonConfig {
        d.clamped(self.d_min, self.d_max)
    }

    pub fn random_config(&self, rng: &mut rng::Rng) -> TendonConfig {
        TendonConfig((0..Self::TENDONS).map(|_| rng.random_range(self.d_min..=self.d_max)).collect())
    }
}

/// Where the robot came from before settling at `target`.
#[derive(Debug, Clone, PartialEq)]
pub struct ApproachContext {
    pub start: TendonConfig,
    pub target: TendonConfig,
    pub seed: u64,
}

struct Arc {
    phi0: f64,
    kappa: f64,
    twist_rate: f64,
}

impl Arc {
    fn new(spec: &RobotSpec, d: &[f64]) -> Self {
        let ux: f64 = (0..3).map(|i| d[i] * TENDON_COS[i]).sum();
        let uy: f64 = (0..3).map(|i| d[i] * TENDON_SIN[i]).sum();
        Self {
            phi0: uy.atan2(ux),
            kappa: ux.hypot(uy) / (spec.tendon_radius * spec.length),
            // dφ/d(arclength) from φ(s) = φ0 + c_h d4 s / r_t, s = l / L.
            twist_rate: HELICAL_TWIST * d[3] / (spec.tendon_radius * spec.length),
        }
    }

    /// Point and unit tangent at arclength `l`.
    fn at(&self, l: f64) -> (Point3, Point3) {
        let phi = self.phi0 + self.twist_rate * l;
        if self.kappa == 0.0 {
            return (Point3::new(0.0, 0.0, l), Point3::z());
        }
        let theta = self.kappa * l;
        let half = 0.5 * theta;
        let rho = 2.0 * half.sin().powi(2) / self.kappa;
        let z = theta.sin() / self.kappa;
        let (sp, cp) = phi.sin_cos();
        let (st, ct) = theta.sin_cos();
        let tangent = Point3::new(
            st * cp - rho * sp * self.twist_rate,
            st * sp + rho * cp * self.twist_rate,
            ct,
        );
        (Point3::new(rho * cp, rho * sp, z), tangent.normalize())
    }
}

/// Backbone point at normalized arclength `s ∈ [0, 1]`.
pub fn backbone(spec: &RobotSpec, d_eff: &TendonConfig, s: f64) -> Point3 {
    Arc::new(spec, &d_eff.0).at(s * spec.length).0
}

/// Effective displacements after the hysteresis offset
/// `σ_h · tanh((target − start)/τ) · |g|`, `τ` a tenth of the range.
pub fn effective_config(spec: &RobotSpec, ctx: &ApproachContext, rng: &mut rng::Rng) -> TendonConfig {
    let tau = 0.1 * spec.range();
    let d = ctx
        .target
        .0
        .iter()
        .zip(&ctx.start.0)
        .map(|(t, s)| {
            let g: f64 = StandardNormal.sample(rng);
            t + spec.hysteresis * ((t - s) / tau).tanh() * g.abs()
        })
        .collect();
    spec.clamp(&TendonConfig(d))
}

/// One captured cloud for a single approach.
pub fn simulate_cloud(spec: &RobotSpec, ctx: &ApproachContext, points: usize) -> Vec<Point3> {
    let mut rng = rng::rng(ctx.seed);
    let d_eff = effective_config(spec, ctx, &mut rng);
    surface_points(spec, &d_eff, points, &mut rng)
}

fn surface_points(spec: &RobotSpec, d_eff: &TendonConfig, points: usize, rng: &mut rng::Rng) -> Vec<Point3> {
    let arc = Arc::new(spec, &d_eff.0);
    let noise = Normal::new(0.0, spec.sensor_noise).expect("non-negative noise");
    (0..points)
        .map(|_| {
            let s: f64 = rng.random();
            let psi = rng.random_range(0.0..TAU);
            let (p, t) = arc.at(s * spec.length);
            let reference = if t.x.abs() > 0.9 { Point3::y() } else { Point3::x() };
            let n1 = (reference - t * reference.dot(&t)).normalize();
            let n2 = t.cross(&n1);
            let eps = Point3::new(noise.sample(rng), noise.sample(rng), noise.sample(rng));
            p + spec.body_radius * (psi.cos() * n1 + psi.sin() * n2) + eps
        })
        .collect()
}

/// Grid and sampling parameters for [`build_dataset`].
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSpec {
    /// Number of evenly spaced levels per tendon.
    pub levels: Vec<usize>,
    pub approaches: usize,
    pub points_per_cloud: usize,
    pub test_fraction: f64,
    pub seed: u64,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        Self { levels: vec![7, 7, 7, 3], approaches: 8, points_per_cloud: 2000, test_fraction: 0.1, seed: 0 }
    }
}

impl DatasetSpec {
    pub fn config_count(&self) -> usize {
        self.levels.iter().product()
    }

    /// Number of test configurations: `test_fraction · total`, rounded half
    /// away from zero.
    pub fn test_count(&self) -> usize {
        (self.test_fraction * self.config_count() as f64).round() as usize
    }
}

/// Every grid configuration in lexicographic order (first tendon slowest).
pub fn grid_configs(spec: &RobotSpec, levels: &[usize]) -> Vec<TendonConfig> {
    let level_value = |k: usize, j: usize| {
        if k <= 1 {
            spec.d_min
        } else {
            spec.d_min + spec.range() * j as f64 / (k - 1) as f64
        }
    };
    let total: usize = levels.iter().product();
    (0..total)
        .map(|mut idx| {
            let mut d = vec![0.0; levels.len()];
            for t in (0..levels.len()).rev() {
                d[t] = level_value(levels[t], idx % levels[t]);
                idx /= levels[t];
            }
            TendonConfig(d)
        })
        .collect()
}

/// Ground-truth cloud for one configuration: `approaches` random starts,
/// one simulated capture each, concatenated.
pub fn config_cloud(spec: &RobotSpec, target: &TendonConfig, approaches: usize, points: usize, seed: u64) -> Vec<Point3> {
    let mut rng = rng::rng(seed);
    let mut cloud = Vec::with_capacity(approaches * points);
    for a in 0..approaches {
        let start = spec.random_config(&mut rng);
        let ctx = ApproachContext { start, target: target.clone(), seed: rng::derive(seed, a as u64) };
        cloud.extend(simulate_cloud(spec, &ctx, points));
    }
    cloud
}

/// Enumerates the grid, simulates every configuration and splits the
/// configurations at random into train and test sets.
pub fn build_dataset(spec: &RobotSpec, ds: &DatasetSpec) -> Result<(Dataset, Dataset)> {
    spec.validate()?;
    if ds.levels.len() != RobotSpec::TENDONS || ds.levels.contains(&0) {
        return Err(Error::invalid(format!("need {} positive level counts", RobotSpec::TENDONS)));
    }
    if ds.approaches < 2 {
        return Err(Error::invalid("at least two approaches per configuration are required"));
    }
    if ds.config_count() < 10 {
        return Err(Error::invalid("the grid must hold at least 10 configurations"));
    }
    if ds.points_per_cloud == 0 {
        return Err(Error::invalid("points per cloud must be positive"));
    }
    if !(0.0..=1.0).contains(&ds.test_fraction) {
        return Err(Error::invalid("test fraction must lie in [0, 1]"));
    }

    let config_seed = rng::stage(ds.seed, "configs");
    let samples: Vec<Sample> = grid_configs(spec, &ds.levels)
        .into_iter()
        .enumerate()
        .map(|(id, config)| {
            let cloud = config_cloud(spec, &config, ds.approaches, ds.points_per_cloud, rng::derive(config_seed, id as u64));
            Sample { id, config, cloud }
        })
        .collect();

    let mut ids: Vec<usize> = (0..samples.len()).collect();
    ids.shuffle(&mut rng::rng(rng::stage(ds.seed, "split")));
    let mut is_test = vec![false; samples.len()];
    for &i in &ids[..ds.test_count()] {
        is_test[i] = true;
    }
    let (test, train): (Vec<Sample>, Vec<Sample>) = samples.into_iter().partition(|s| is_test[s.id]);
    Ok((Dataset::new(Split::Train, train)?, Dataset::new(Split::Test, test)?))
}

/// Writes `manifest.txt` plus one `cloud_<id>.csv` per configuration.
pub fn write_dataset_dir(dir: &Path, train: &Dataset, test: &Dataset) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut all: Vec<(&Sample, Split)> =
        train.entries.iter().map(|s| (s, train.split)).chain(test.entries.iter().map(|s| (s, test.split))).collect();
    all.sort_by_key(|(s, _)| s.id);

    let mut manifest = BufWriter::new(fs::File::create(dir.join("manifest.txt"))?);
    for (s, split) in &all {
        let d: Vec<String> = s.config.0.iter().map(|v| fmt_real(*v)).collect();
        writeln!(manifest, "{} {} {}", s.id, split.as_str(), d.join(" "))?;
        let mut w = BufWriter::new(fs::File::create(dir.join(format!("cloud_{}.csv", s.id)))?);
        writeln!(w, "x,y,z")?;
        for p in &s.cloud {
            writeln!(w, "{},{},{}", fmt_real(p.x), fmt_real(p.y), fmt_real(p.z))?;
        }
        w.flush()?;
    }
    manifest.flush()?;
    Ok(())
}

fn read_cloud(path: &Path) -> Result<Vec<Point3>> {
    let reader = BufReader::new(fs::File::open(path)?);
    let mut out = Vec::new();
    let mut offset = 0usize;
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let here = offset;
        offset += line.len() + 1;
        if i == 0 {
            if line.trim() != "x,y,z" {
                return Err(Error::Parse { offset: 0, message: format!("{}: expected `x,y,z` header", path.display()) });
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let v: Vec<f64> = line
            .split(',')
            .map(|f| f.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Parse { offset: here, message: format!("{}: {e}", path.display()) })?;
        if v.len() != 3 {
            return Err(Error::Parse { offset: here, message: format!("{}: expected 3 columns", path.display()) });
        }
        out.push(Point3::new(v[0], v[1], v[2]));
    }
    Ok(out)
}

/// Reads a directory written by [`write_dataset_dir`].
pub fn read_dataset_dir(dir: &Path) -> Result<(Dataset, Dataset)> {
    let text = fs::read_to_string(dir.join("manifest.txt"))?;
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (off, line) in crate::gmm::line_offsets(&text) {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        let bad = |m: &str| Error::Parse { offset: off, message: format!("manifest: {m}") };
        if fields.len() < 3 {
            return Err(bad("expected `<id> <split> <d1> ...`"));
        }
        let id: usize = fields[0].parse().map_err(|_| bad("bad id"))?;
        let split = Split::parse(fields[1]).ok_or_else(|| bad("split must be train or test"))?;
        let d: Vec<f64> = fields[2..].iter().map(|f| f.parse()).collect::<std::result::Result<_, _>>().map_err(|_| bad("bad displacement"))?;
        let cloud = read_cloud(&dir.join(format!("cloud_{id}.csv")))?;
        let sample = Sample { id, config: TendonConfig(d), cloud };
        match split {
            Split::Train => train.push(sample),
            Split::Test => test.push(sample),
        }
    }
    Ok((Dataset::new(Split::Train, train)?, Dataset::new(Split::Test, test)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn cfg(d: [f64; 4]) -> TendonConfig {
        TendonConfig(d.to_vec())
    }

    #[test]
    fn straight_backbone() {
        let spec = RobotSpec::default();
        assert_eq!(backbone(&spec, &cfg([0.0; 4]), 1.0), Point3::new(0.0, 0.0, 0.2));
        assert_eq!(backbone(&spec, &cfg([0.0; 4]), 0.5), Point3::new(0.0, 0.0, 0.1));
        for c in [0.005, 0.017, 0.03] {
            let p = backbone(&spec, &cfg([c, c, c, 0.02]), 1.0);
            assert_eq!(p, Point3::new(0.0, 0.0, 0.2));
        }
    }

    #[test]
    fn bending_stays_on_arc() {
        let spec = RobotSpec::default();
        // Tendon 1 alone bends in the x-z plane with κ = d/(r_t L).
        let d = 0.01;
        let kappa = d / (spec.tendon_radius * spec.length);
        let p = backbone(&spec, &cfg([d, 0.0, 0.0, 0.0]), 1.0);
        let theta = kappa * spec.length;
        assert_relative_eq!(p.x, (1.0 - theta.cos()) / kappa, epsilon = 1e-14);
        assert_relative_eq!(p.y, 0.0, epsilon = 1e-14);
        assert_relative_eq!(p.z, theta.sin() / kappa, epsilon = 1e-14);
    }

    #[test]
    fn cyclic_relabeling_rotates_output() {
        let spec = RobotSpec::default();
        let mut r = rng::rng(4);
        let rot = nalgebra::Rotation3::from_axis_angle(&Point3::z_axis(), TAU / 3.0);
        for _ in 0..100 {
            let d = spec.random_config(&mut r);
            let shifted = cfg([d.0[2], d.0[0], d.0[1], d.0[3]]);
            let s: f64 = r.random();
            let a = rot * backbone(&spec, &d, s);
            let b = backbone(&spec, &shifted, s);
            assert!((a - b).norm() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn backbone_is_lipschitz() {
        let spec = RobotSpec::default();
        let mut r = rng::rng(5);
        for _ in 0..200 {
            let d = spec.random_config(&mut r);
            let s: f64 = r.random_range(0.0..0.999);
            let delta: f64 = r.random_range(0.0..1e-3);
            let jump = (backbone(&spec, &d, s) - backbone(&spec, &d, s + delta)).norm();
            assert!(jump <= 2.0 * spec.length * delta + 1e-15);
        }
    }

    #[test]
    fn noise_free_clouds_share_a_surface() {
        let spec = RobotSpec { hysteresis: 0.0, sensor_noise: 0.0, ..RobotSpec::default() };
        let target = cfg([0.02, 0.005, 0.0, 0.01]);
        let a = ApproachContext { start: cfg([0.0; 4]), target: target.clone(), seed: 1 };
        let b = ApproachContext { start: cfg([0.03; 4]), target: target.clone(), seed: 1 };
        assert_eq!(simulate_cloud(&spec, &a, 200), simulate_cloud(&spec, &b, 200));
        // Different seeds still land on the tube around the same backbone.
        let c = ApproachContext { seed: 2, ..b };
        for p in simulate_cloud(&spec, &c, 200) {
            assert!((distance_to_backbone(&spec, &target, &p) - spec.body_radius).abs() < 1e-4);
        }
    }

    #[test]
    fn clouds_are_reproducible() {
        let spec = RobotSpec::default();
        let ctx = ApproachContext { start: cfg([0.0; 4]), target: cfg([0.01, 0.02, 0.0, 0.03]), seed: 9 };
        assert_eq!(simulate_cloud(&spec, &ctx, 300), simulate_cloud(&spec, &ctx, 300));
    }

    /// Nearest distance to 1000 evenly spaced backbone samples.
    fn distance_to_backbone(spec: &RobotSpec, d: &TendonConfig, p: &Point3) -> f64 {
        (0..=1000).map(|k| (backbone(spec, d, k as f64 / 1000.0) - p).norm()).fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn points_hug_the_effective_backbone() {
        let spec = RobotSpec::default();
        let ctx = ApproachContext { start: cfg([0.03, 0.0, 0.01, 0.0]), target: cfg([0.01, 0.02, 0.005, 0.015]), seed: 31 };
        let mut rng = rng::rng(ctx.seed);
        let d_eff = effective_config(&spec, &ctx, &mut rng);
        assert_ne!(d_eff, ctx.target);
        for p in simulate_cloud(&spec, &ctx, 2000) {
            let dist = distance_to_backbone(&spec, &d_eff, &p);
            assert!(dist <= spec.body_radius + 5.0 * spec.sensor_noise, "{dist}");
            assert!(p.norm() <= spec.length + spec.body_radius + 6.0 * spec.sensor_noise);
        }
    }

    #[test]
    fn dataset_counts_and_split() {
        let spec = RobotSpec::default();
        let ds = DatasetSpec { levels: vec![3, 3, 3, 1], approaches: 2, points_per_cloud: 50, test_fraction: 0.2, seed: 1 };
        let (train, test) = build_dataset(&spec, &ds).unwrap();
        assert_eq!(train.len() + test.len(), 27);
        assert_eq!(test.len(), 5);
        assert!(train.entries.iter().chain(&test.entries).all(|s| s.cloud.len() == 100));
        assert!(train.entries.iter().chain(&test.entries).all(|s| spec.contains(&s.config)));

        let paper_scale = DatasetSpec { levels: vec![2530, 1, 1, 1], test_fraction: 0.1, ..ds.clone() };
        assert_eq!(paper_scale.test_count(), 253);
        assert_eq!(paper_scale.config_count() - paper_scale.test_count(), 2277);
        let desk = DatasetSpec::default();
        assert_eq!(desk.config_count(), 1029);
        assert_eq!(desk.test_count(), 103);
    }

    #[test]
    fn dataset_preconditions() {
        let spec = RobotSpec::default();
        let ds = DatasetSpec { levels: vec![3, 3, 1, 1], approaches: 2, points_per_cloud: 5, test_fraction: 0.1, seed: 1 };
        assert!(build_dataset(&spec, &ds).is_err());
        let ds = DatasetSpec { levels: vec![3, 3, 3, 1], approaches: 1, ..ds };
        assert!(build_dataset(&spec, &ds).is_err());
    }

    #[test]
    fn approach_history_spreads_the_cloud() {
        let spec = RobotSpec::default();
        let target = cfg([0.015, 0.0, 0.0, 0.0]);
        let approaches = 6;
        let points = 400;
        let cloud = config_cloud(&spec, &target, approaches, points, 17);
        let centroids: Vec<Point3> =
            cloud.chunks(points).map(|c| c.iter().fold(Point3::zeros(), |a, p| a + p) / points as f64).collect();
        let mut total = 0.0;
        let mut pairs = 0;
        for i in 0..approaches {
            for j in i + 1..approaches {
                total += (centroids[i] - centroids[j]).norm();
                pairs += 1;
            }
        }
        assert!(total / pairs as f64 > 0.0);
    }

    #[test]
    fn dataset_is_reproducible_and_round_trips_through_disk() {
        let spec = RobotSpec::default();
        let ds = DatasetSpec { levels: vec![2, 2, 2, 2], approaches: 2, points_per_cloud: 20, test_fraction: 0.25, seed: 4 };
        let a = build_dataset(&spec, &ds).unwrap();
        let b = build_dataset(&spec, &ds).unwrap();
        assert_eq!(a, b);
        let dir = tempfile::tempdir().unwrap();
        write_dataset_dir(dir.path(), &a.0, &a.1).unwrap();
        let back = read_dataset_dir(dir.path()).unwrap();
        assert_eq!(back, a);
    }
}
