//! Pipeline commands behind the `tdcr-mdn` binary.
//!
//! Each command reads a [`RunConfig`], derives its own seed from the global
//! one by stage name, and writes plain-text artifacts under `out`. Files
//! written by `gen-data`, `train`, `plan` and `optimize` are byte-identical
//! across runs with the same seed; wall-clock timings go to separate files.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use crate::collision::{config_collision_bound, mc_collision_estimate, Scene};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::gmm::fmt_real;
use crate::mdn::{
    self, evaluate_nll, load_params, mdn_forward, save_params, train, Architecture, MdnParams, TrainHyper,
};
use crate::planner::{optimize_trajectory, prm_build, prm_query, trajectory_bound, OptimizeResult, Trajectory};
use crate::rng;
use crate::synth::{build_dataset, read_dataset_dir, write_dataset_dir};

#[derive(Debug, Parser)]
#[command(name = "tdcr-mdn", version, about = "Mixture-density kinematics, collision bounds and planning for tendon-driven robots")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Run-config file of `key = value` lines.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides the config's global seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides the config's output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate the synthetic robot over the configuration grid.
    GenData(Common),
    /// Train one model per component count in the sweep.
    Train(Common),
    /// Time the forward pass over random configurations.
    Bench {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        count: Option<usize>,
    },
    /// Plan a nominal trajectory through the scene with a roadmap.
    Plan {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Refine a trajectory's intermediate waypoints against the collision bound.
    Optimize {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        trajectory: Option<PathBuf>,
    },
    /// Compare collision bounds with Monte Carlo estimates.
    Validate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: Option<PathBuf>,
    },
}

fn load_config(c: &Common) -> Result<RunConfig> {
    let cfg = match &c.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    Ok(cfg.with_overrides(c.seed, c.out.clone()))
}

/// Parses arguments, runs the command and reports errors on stderr.
pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenData(c) => {
            let s = cmd_gen_data(&load_config(&c)?)?;
            println!("wrote {} configs ({} train, {} test) to {}", s.train + s.test, s.train, s.test, s.dir.display());
        }
        Command::Train(c) => {
            let s = cmd_train(&load_config(&c)?)?;
            print!("{}", s.summary_csv());
            let failed: Vec<String> = s.rows.iter().filter(|r| r.diverged.is_some()).map(|r| r.components.to_string()).collect();
            if !failed.is_empty() {
                return Err(Error::Numerical(format!("training diverged for component counts {}", failed.join(", "))));
            }
        }
        Command::Bench { common, model, count } => {
            let mut cfg = load_config(&common)?;
            cfg.model = model.or(cfg.model);
            cfg.bench_count = count.unwrap_or(cfg.bench_count);
            let b = cmd_bench(&cfg)?;
            println!(
                "{} configs: mean {:.4} ms, median {:.4} ms, p99 {:.4} ms (config checksum {})",
                b.count,
                b.mean_ms,
                b.median_ms,
                b.p99_ms,
                fmt_real(b.config_checksum)
            );
        }
        Command::Plan { common, model } => {
            let mut cfg = load_config(&common)?;
            cfg.model = model.or(cfg.model);
            let p = cmd_plan(&cfg)?;
            println!("trajectory with {} waypoints, bound {}", p.trajectory.len(), fmt_real(p.bound));
        }
        Command::Optimize { common, model, trajectory } => {
            let mut cfg = load_config(&common)?;
            cfg.model = model.or(cfg.model);
            cfg.trajectory = trajectory.or(cfg.trajectory);
            let r = cmd_optimize(&cfg)?;
            println!("bound {} -> {} after {} iterations", fmt_real(r.initial_bound()), fmt_real(r.final_bound()), r.log.len());
        }
        Command::Validate { common, model } => {
            let mut cfg = load_config(&common)?;
            cfg.model = model.or(cfg.model);
            let v = cmd_validate(&cfg)?;
            print!("{}", v.to_csv());
            println!("conservative fraction: {}", v.conservative_fraction());
        }
    }
    Ok(())
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, contents)?;
    Ok(())
}

fn load_model(path: &Path) -> Result<MdnParams> {
    load_params(&fs::read(path).map_err(|e| Error::Config(format!("cannot read model {}: {e}", path.display())))?)
}

pub struct GenDataSummary {
    pub dir: PathBuf,
    pub train: usize,
    pub test: usize,
}

pub fn cmd_gen_data(cfg: &RunConfig) -> Result<GenDataSummary> {
    let mut ds = cfg.dataset.clone();
    ds.seed = rng::stage(cfg.seed, "gen-data");
    let (train, test) = build_dataset(&cfg.robot, &ds)?;
    let dir = cfg.data_dir();
    write_dataset_dir(&dir, &train, &test)?;
    Ok(GenDataSummary { dir, train: train.len(), test: test.len() })
}

pub struct TrainRow {
    pub components: usize,
    pub initial_nll: f64,
    pub test_nll: f64,
    pub collapse_fraction: f64,
    pub diverged: Option<usize>,
}

pub struct TrainSummary {
    pub rows: Vec<TrainRow>,
}

impl TrainSummary {
    pub fn summary_csv(&self) -> String {
        let mut out = String::from("components,test_nll,collapse_fraction\n");
        for r in &self.rows {
            let _ = writeln!(out, "{},{},{}", r.components, fmt_real(r.test_nll), fmt_real(r.collapse_fraction));
        }
        out
    }
}

/// Trains each count in the sweep. Divergence is recorded as NaN in the
/// summary and the sweep continues.
pub fn cmd_train(cfg: &RunConfig) -> Result<TrainSummary> {
    let (train_set, test_set) = read_dataset_dir(&cfg.data_dir())?;
    let eval_set = if test_set.is_empty() { &train_set } else { &test_set };
    let held_out = (!test_set.is_empty()).then_some(&test_set);
    let mut rows = Vec::new();
    for &n in &cfg.components {
        let seed = rng::stage(cfg.seed, &format!("train-n{n}"));
        let arch = Architecture { components: n, trunk: cfg.trunk.clone(), head: cfg.head.clone(), ..Architecture::default() };
        let init = MdnParams::init(&arch, train_set.centroid(), seed)?;
        let initial_nll = evaluate_nll(&init, eval_set)?;
        let hyper = TrainHyper { seed, ..cfg.train.clone() };
        match train(&init, &train_set, held_out, &hyper) {
            Ok((params, report)) => {
                let test_nll = evaluate_nll(&params, eval_set)?;
                write(&cfg.out.join(format!("model_n{n}.txt")), save_params(&params)?)?;
                let mut curve = String::from("epoch,train_nll,held_out_nll\n");
                let mut timing = String::from("epoch,seconds\n");
                for (e, t) in report.train_nll.iter().enumerate() {
                    let h = report.held_out_nll.get(e).copied().unwrap_or(f64::NAN);
                    let _ = writeln!(curve, "{e},{},{}", fmt_real(*t), fmt_real(h));
                    let _ = writeln!(timing, "{e},{:.6}", report.epoch_seconds.get(e).copied().unwrap_or(0.0));
                }
                write(&cfg.out.join(format!("train_curve_n{n}.csv")), curve)?;
                write(&cfg.out.join(format!("timing_n{n}.csv")), timing)?;
                rows.push(TrainRow { components: n, initial_nll, test_nll, collapse_fraction: report.collapse_fraction, diverged: None });
            }
            Err(Error::TrainingDiverged { epoch }) => {
                eprintln!("n={n}: training diverged at epoch {epoch}");
                rows.push(TrainRow { components: n, initial_nll, test_nll: f64::NAN, collapse_fraction: f64::NAN, diverged: Some(epoch) });
            }
            Err(e) => return Err(e),
        }
    }
    let summary = TrainSummary { rows };
    write(&cfg.out.join("summary.csv"), summary.summary_csv())?;
    Ok(summary)
}

pub struct BenchReport {
    pub count: usize,
    pub mean_ms: f64,
    pub median_ms: f64,
    pub p99_ms: f64,
    /// Sum of all sampled displacements; identical across runs with one seed.
    pub config_checksum: f64,
}

/// Times `mdn_forward` over uniformly random configurations.
pub fn bench_forward(model: &MdnParams, count: usize, d_min: f64, d_max: f64, seed: u64) -> Result<BenchReport> {
    use rand::Rng as _;
    if count == 0 {
        return Err(Error::invalid("bench count must be positive"));
    }
    let mut r = rng::rng(seed);
    let configs: Vec<mdn::TendonConfig> =
        (0..count).map(|_| mdn::TendonConfig((0..model.inputs).map(|_| r.random_range(d_min..=d_max)).collect())).collect();
    let mut times = Vec::with_capacity(count);
    for c in &configs {
        let t = Instant::now();
        let g = mdn_forward(model, c)?;
        std::hint::black_box(&g);
        times.push(t.elapsed().as_secs_f64() * 1e3);
    }
    let mean_ms = times.iter().sum::<f64>() / count as f64;
    times.sort_by(f64::total_cmp);
    let at = |q: f64| times[((q * (count - 1) as f64).round() as usize).min(count - 1)];
    Ok(BenchReport {
        count,
        mean_ms,
        median_ms: at(0.5),
        p99_ms: at(0.99),
        config_checksum: configs.iter().flat_map(|c| c.0.iter()).sum(),
    })
}

pub fn cmd_bench(cfg: &RunConfig) -> Result<BenchReport> {
    let model = load_model(&cfg.model_path())?;
    bench_forward(&model, cfg.bench_count, cfg.robot.d_min, cfg.robot.d_max, rng::stage(cfg.seed, "bench"))
}

pub struct PlanResult {
    pub trajectory: Trajectory,
    pub bound: f64,
}

pub fn cmd_plan(cfg: &RunConfig) -> Result<PlanResult> {
    let model = load_model(&cfg.model_path())?;
    let scene = Scene::load(cfg.scene_path()?)?;
    let (start, goal) = match (&scene.start, &scene.goal) {
        (Some(s), Some(g)) => (s, g),
        _ => return Err(Error::Config("the scene needs `start` and `goal` records".into())),
    };
    let params = crate::planner::PrmParams { seed: rng::stage(cfg.seed, "plan"), ..cfg.prm.clone() };
    let roadmap = prm_build(&scene.env, &model, &params)?;
    let trajectory = prm_query(&roadmap, &scene.env, &model, start, goal, &params)?;
    let bound = trajectory_bound(&model, &scene.env, &trajectory, cfg.optimize.interior)?;
    write(&cfg.out.join("trajectory.csv"), trajectory.to_csv())?;
    write(
        &cfg.out.join("plan.txt"),
        format!("nodes = {}\nedges = {}\nwaypoints = {}\nbound = {}\n", roadmap.nodes.len(), roadmap.edges.len(), trajectory.len(), fmt_real(bound)),
    )?;
    Ok(PlanResult { trajectory, bound })
}

pub fn cmd_optimize(cfg: &RunConfig) -> Result<OptimizeResult> {
    let model = load_model(&cfg.model_path())?;
    let scene = Scene::load(cfg.scene_path()?)?;
    let traj = Trajectory::from_csv(&fs::read_to_string(cfg.trajectory_path())?)?;
    let params = crate::planner::OptimizeParams { seed: rng::stage(cfg.seed, "optimize"), ..cfg.optimize.clone() };
    let result = optimize_trajectory(&traj, &scene.env, &model, &params)?;
    write(&cfg.out.join("trajectory_optimized.csv"), result.trajectory.to_csv())?;
    write(&cfg.out.join("optimize_log.csv"), result.log_csv())?;
    Ok(result)
}

pub struct ValidationRow {
    pub config: mdn::TendonConfig,
    pub bound: f64,
    pub estimate: f64,
    pub std_error: f64,
}

pub struct ValidationReport {
    pub rows: Vec<ValidationRow>,
}

impl ValidationReport {
    pub fn conservative_fraction(&self) -> f64 {
        let ok = self.rows.iter().filter(|r| r.bound >= r.estimate - 3.0 * r.std_error).count();
        ok as f64 / self.rows.len().max(1) as f64
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("config,bound,mc_estimate,mc_stderr\n");
        for (i, r) in self.rows.iter().enumerate() {
            let _ = writeln!(out, "{i},{},{},{}", fmt_real(r.bound), fmt_real(r.estimate), fmt_real(r.std_error));
        }
        out
    }
}

pub fn cmd_validate(cfg: &RunConfig) -> Result<ValidationReport> {
    use rand::Rng as _;
    let model = load_model(&cfg.model_path())?;
    let scene = Scene::load(cfg.scene_path()?)?;
    let base = rng::stage(cfg.seed, "validate");
    let mut r = rng::rng(base);
    let mut rows = Vec::with_capacity(cfg.validate_configs);
    for i in 0..cfg.validate_configs {
        let config = mdn::TendonConfig((0..model.inputs).map(|_| r.random_range(cfg.robot.d_min..=cfg.robot.d_max)).collect());
        let g = mdn_forward(&model, &config)?;
        let bound = config_collision_bound(&g, &scene.env).bound;
        let mc = mc_collision_estimate(&g, &scene.env, cfg.validate_samples, rng::derive(base, i as u64))?;
        rows.push(ValidationRow { config, bound, estimate: mc.estimate, std_error: mc.std_error });
    }
    let report = ValidationReport { rows };
    write(&cfg.out.join("validate.csv"), report.to_csv())?;
    Ok(report)
}
