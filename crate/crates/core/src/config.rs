//! Run configuration for the pipeline commands.
//!
//! A run config is a text file of `key = value` lines; `#` starts a comment
//! and unknown keys are rejected. Every key is optional. Relative paths are
//! resolved against the directory holding the config file.
//!
//! ```text
//! seed = 7
//! out = runs/desk
//! data.levels = 7, 7, 7, 3
//! train.components = 1, 2, 3, 4, 5
//! scene = scenes/corridor.txt
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::gmm::line_offsets;
use crate::mdn::TrainHyper;
use crate::planner::{OptimizeParams, PrmParams};
use crate::synth::{DatasetSpec, RobotSpec};

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub out: PathBuf,
    pub robot: RobotSpec,
    pub dataset: DatasetSpec,
    /// Dataset directory; defaults to `<out>/data`.
    pub data_dir: Option<PathBuf>,
    pub train: TrainHyper,
    pub trunk: Vec<usize>,
    pub head: Vec<usize>,
    pub components: Vec<usize>,
    pub scene: Option<PathBuf>,
    /// Model used by plan, optimize, bench and validate; defaults to
    /// `<out>/model_n5.txt`.
    pub model: Option<PathBuf>,
    /// Trajectory optimized by the optimize command; defaults to
    /// `<out>/trajectory.csv`.
    pub trajectory: Option<PathBuf>,
    pub prm: PrmParams,
    pub optimize: OptimizeParams,
    pub bench_count: usize,
    pub validate_configs: usize,
    pub validate_samples: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            out: PathBuf::from("out"),
            robot: RobotSpec::default(),
            dataset: DatasetSpec::default(),
            data_dir: None,
            train: TrainHyper::default(),
            trunk: vec![128, 128],
            head: vec![64],
            components: (1..=10).collect(),
            scene: None,
            model: None,
            trajectory: None,
            prm: PrmParams::default(),
            optimize: OptimizeParams::default(),
            bench_count: 10_000,
            validate_configs: 20,
            validate_samples: 100_000,
        }
    }
}

fn parse_num<T: std::str::FromStr>(v: &str) -> std::result::Result<T, String>
where
    T::Err: std::fmt::Display,
{
    v.parse::<T>().map_err(|e| format!("bad value `{v}`: {e}"))
}

fn parse_list(v: &str) -> std::result::Result<Vec<usize>, String> {
    v.split(',').map(|s| parse_num::<usize>(s.trim())).collect()
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let mut c = RunConfig::default();
        for (off, raw) in line_offsets(text) {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .map(|(k, v)| (k.trim(), v.trim()))
                .ok_or_else(|| Error::Parse { offset: off, message: format!("expected `key = value`, found `{line}`") })?;
            c.set(key, value, base).map_err(|m| Error::Parse { offset: off, message: format!("{key}: {m}") })?;
        }
        c.sync_limits();
        c.validate()?;
        Ok(c)
    }

    fn set(&mut self, key: &str, v: &str, base: &Path) -> std::result::Result<(), String> {
        let path = || base.join(v);
        match key {
            "seed" => self.seed = parse_num(v)?,
            "out" => self.out = path(),
            "robot.length" => self.robot.length = parse_num(v)?,
            "robot.tendon_radius" => self.robot.tendon_radius = parse_num(v)?,
            "robot.body_radius" => self.robot.body_radius = parse_num(v)?,
            "robot.d_min" => self.robot.d_min = parse_num(v)?,
            "robot.d_max" => self.robot.d_max = parse_num(v)?,
            "robot.hysteresis" => self.robot.hysteresis = parse_num(v)?,
            "robot.sensor_noise" => self.robot.sensor_noise = parse_num(v)?,
            "data.levels" => self.dataset.levels = parse_list(v)?,
            "data.approaches" => self.dataset.approaches = parse_num(v)?,
            "data.points" => self.dataset.points_per_cloud = parse_num(v)?,
            "data.test_fraction" => self.dataset.test_fraction = parse_num(v)?,
            "data.dir" => self.data_dir = Some(path()),
            "train.epochs" => self.train.epochs = parse_num(v)?,
            "train.step_size" => self.train.step_size = parse_num(v)?,
            "train.batch_size" => self.train.batch_size = parse_num(v)?,
            "train.points_per_config" => self.train.points_per_config = parse_num(v)?,
            "train.components" => self.components = parse_list(v)?,
            "train.trunk" => self.trunk = parse_list(v)?,
            "train.head" => self.head = parse_list(v)?,
            "scene" => self.scene = Some(path()),
            "model" => self.model = Some(path()),
            "trajectory" => self.trajectory = Some(path()),
            "prm.nodes" => self.prm.nodes = parse_num(v)?,
            "prm.neighbors" => self.prm.neighbors = parse_num(v)?,
            "prm.edge_step" => self.prm.edge_step = parse_num(v)?,
            "optimize.iterations" => self.optimize.iterations = parse_num(v)?,
            "optimize.samples" => self.optimize.samples = parse_num(v)?,
            "optimize.radius" => self.optimize.radius = parse_num(v)?,
            "optimize.xi" => self.optimize.xi = parse_num(v)?,
            "optimize.interior" => self.optimize.interior = parse_num(v)?,
            "bench.count" => self.bench_count = parse_num(v)?,
            "validate.configs" => self.validate_configs = parse_num(v)?,
            "validate.samples" => self.validate_samples = parse_num(v)?,
            _ => return Err("unknown key".into()),
        }
        Ok(())
    }

    /// Planner limits follow the robot's displacement range.
    fn sync_limits(&mut self) {
        self.prm.d_min = self.robot.d_min;
        self.prm.d_max = self.robot.d_max;
        self.optimize.d_min = self.robot.d_min;
        self.optimize.d_max = self.robot.d_max;
    }

    pub fn validate(&self) -> Result<()> {
        self.robot.validate()?;
        if self.components.is_empty() || self.components.contains(&0) {
            return Err(Error::Config("component counts must be at least 1".into()));
        }
        if self.dataset.levels.len() != RobotSpec::TENDONS || self.dataset.levels.contains(&0) {
            return Err(Error::Config(format!("data.levels needs {} positive entries", RobotSpec::TENDONS)));
        }
        if !(0.0..1.0).contains(&self.dataset.test_fraction) {
            return Err(Error::Config("data.test_fraction must lie in [0, 1)".into()));
        }
        Ok(())
    }

    /// Applies the command-line overrides; the seed fans out again.
    pub fn with_overrides(mut self, seed: Option<u64>, out: Option<PathBuf>) -> Self {
        if let Some(s) = seed {
            self.seed = s;
        }
        if let Some(o) = out {
            self.out = o;
        }
        self
    }

    pub fn data_dir(&self) -> PathBuf {
        self.data_dir.clone().unwrap_or_else(|| self.out.join("data"))
    }

    pub fn model_path(&self) -> PathBuf {
        self.model.clone().unwrap_or_else(|| self.out.join("model_n5.txt"))
    }

    pub fn trajectory_path(&self) -> PathBuf {
        self.trajectory.clone().unwrap_or_else(|| self.out.join("trajectory.csv"))
    }

    pub fn scene_path(&self) -> Result<&Path> {
        let p = self.scene.as_deref().ok_or_else(|| Error::Config("no scene configured".into()))?;
        if !p.exists() {
            return Err(Error::Config(format!("scene file {} does not exist", p.display())));
        }
        Ok(p)
    }
}
