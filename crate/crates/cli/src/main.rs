//! `ptsf`: train, simulate and batch-evaluate the prescribed-time safety
//! filter on the two-link manipulator.
//!
//! Exit codes:
//!
//! | code | meaning                                  |
//! |------|------------------------------------------|
//! | 0    | success                                  |
//! | 2    | command-line usage error                 |
//! | 3    | configuration error                      |
//! | 4    | trained model files missing or unusable  |
//! | 5    | runtime failure (numerics, I/O)          |

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Mutex;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

use ptsf_core::config::{ConfigError, ExperimentConfig};
use ptsf_core::gp::{file_name, load_model, save_model, BoundParams, GpError};
use ptsf_core::sim::{
    evaluate_run, exponential_bound_check, fit_report, run_monte_carlo, simulate,
    train_uncertainty_model, uncertainty_from_model, write_batch_csv, write_paired_csv,
    write_trace_csv, BatchReport, ControllerMode, ExponentialBoundCheck, FitReport, GpUncertainty,
    NoUncertaintyModel, RunReport, RunSetup, SimError, UncertaintyModel,
};

#[derive(Debug, Error)]
enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error("{0}")]
    MissingModels(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 3,
            CliError::MissingModels(_) => 4,
            CliError::Runtime(_) => 5,
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<GpError> for CliError {
    fn from(e: GpError) -> Self {
        CliError::Runtime(e.to_string())
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |e| CliError::Runtime(format!("{}: {e}", path.display()))
}

#[derive(Debug, Parser)]
#[command(
    name = "ptsf",
    version,
    about = "Prescribed-time safety filter with GP uncertainty bounds"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit the GP to noisy samples of d(x) and save one model file per output.
    Train(Common),
    /// Single closed-loop run with the config's offset and initial state.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "ptsgpc")]
        mode: ControllerMode,
        /// Model directory; defaults to `<out-dir>/models`.
        #[arg(long)]
        models: Option<PathBuf>,
    },
    /// Randomized batch; the GP is refit for every run's uncertainty.
    Montecarlo {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "ptsgpc")]
        mode: ControllerMode,
        /// Overrides the config's run count.
        #[arg(long)]
        runs: Option<usize>,
        /// Also write every run's trace CSV.
        #[arg(long)]
        traces: bool,
    },
    /// PTSC and PTSGPC batches on identical seeds plus a paired summary.
    Compare {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        runs: Option<usize>,
    },
}

#[derive(Debug, Args)]
struct Common {
    /// TOML experiment config; the built-in manipulator setup when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the config's master seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
}

struct Loaded {
    config: ExperimentConfig,
    path: Option<PathBuf>,
    hash: String,
}

impl Common {
    fn load(&self) -> Result<Loaded, CliError> {
        let (mut config, text, path) = match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path).map_err(|source| ConfigError::Read {
                    path: path.display().to_string(),
                    source,
                })?;
                let config = ExperimentConfig::from_toml_str(&text)?;
                (config, text, Some(path.clone()))
            }
            None => {
                let config = ExperimentConfig::manipulator();
                let text = config.to_toml_string()?;
                (config, text, None)
            }
        };
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        fs::create_dir_all(&self.out_dir).map_err(io_err(&self.out_dir))?;
        Ok(Loaded {
            config,
            path,
            hash: Sha256::digest(text.as_bytes())
                .iter()
                .map(|b| format!("{b:02x}"))
                .collect(),
        })
    }
}

#[derive(Debug, Serialize)]
struct RunManifest {
    command: String,
    tool_version: String,
    config_path: Option<String>,
    config_sha256: String,
    seed: u64,
    started_unix_s: f64,
    wall_clock_s: f64,
    outputs: Vec<String>,
    params: serde_json::Value,
}

struct Recorder {
    command: String,
    started: SystemTime,
    clock: Instant,
    outputs: Vec<PathBuf>,
}

impl Recorder {
    fn new(command: impl Into<String>) -> Self {
        Self {
            command: command.into(),
            started: SystemTime::now(),
            clock: Instant::now(),
            outputs: Vec::new(),
        }
    }

    fn finish(
        self,
        loaded: &Loaded,
        out_dir: &Path,
        params: serde_json::Value,
    ) -> Result<PathBuf, CliError> {
        let manifest = RunManifest {
            command: self.command.clone(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            config_path: loaded.path.as_ref().map(|p| p.display().to_string()),
            config_sha256: loaded.hash.clone(),
            seed: loaded.config.seed,
            started_unix_s: self
                .started
                .duration_since(UNIX_EPOCH)
                .map_or(0.0, |d| d.as_secs_f64()),
            wall_clock_s: self.clock.elapsed().as_secs_f64(),
            outputs: self
                .outputs
                .iter()
                .map(|p| p.display().to_string())
                .collect(),
            params,
        };
        let path = out_dir.join(format!("manifest_{}.json", self.command));
        write_json(&path, &manifest)?;
        Ok(path)
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Runtime(e.to_string()))?;
    fs::write(path, text + "\n").map_err(io_err(path))
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path).map(BufWriter::new).map_err(io_err(path))
}

#[derive(Debug, Serialize)]
struct TrainOutput<'a> {
    bound: &'a BoundParams,
    root_beta: f64,
    fit: &'a FitReport,
}

fn cmd_train(common: &Common) -> Result<(), CliError> {
    let loaded = common.load()?;
    let cfg = &loaded.config;
    let mut rec = Recorder::new("train");
    let setup = RunSetup::nominal(cfg, cfg.seed);
    let plant = setup.plant(cfg)?;
    let (gp, bound) = train_uncertainty_model(cfg, &plant, &setup.streams)?;
    let fit = fit_report(cfg, &plant, &gp.model)?;

    let model_dir = common.out_dir.join("models");
    rec.outputs
        .extend(save_model(&gp.model, Some(&bound), &model_dir)?);
    let report_path = common.out_dir.join("fit_report.json");
    write_json(
        &report_path,
        &TrainOutput {
            bound: &bound,
            root_beta: gp.evaluator.root_beta,
            fit: &fit,
        },
    )?;
    rec.outputs.push(report_path);

    for j in 0..fit.rmse.len() {
        println!(
            "output {j}: rmse {:.4} (signal rms {:.4}), max std {:.4}",
            fit.rmse[j], fit.signal_rms[j], fit.max_std[j]
        );
    }
    println!(
        "sqrt(beta) {:.4}, gamma {:?}",
        gp.evaluator.root_beta,
        gp.evaluator.gamma.as_slice()
    );
    let manifest = rec.finish(
        &loaded,
        &common.out_dir,
        serde_json::json!({
            "training_points": fit.training_points,
            "holdout_points": fit.holdout_points,
            "offset": setup.offset,
        }),
    )?;
    println!("wrote {}", manifest.display());
    Ok(())
}

fn load_uncertainty(cfg: &ExperimentConfig, dir: &Path) -> Result<GpUncertainty, CliError> {
    let missing = |detail: String| {
        CliError::MissingModels(format!(
            "{detail}; run `ptsf train` with the same config (looked for {} in {})",
            file_name(0),
            dir.display()
        ))
    };
    let (model, bound) = match load_model(dir) {
        Ok(v) => v,
        Err(GpError::Io(e)) => return Err(missing(format!("cannot read model files: {e}"))),
        Err(e) => return Err(missing(e.to_string())),
    };
    if model.input_dim() != cfg.training.input_indices.len()
        || model.output_dim() != cfg.input_dim()
    {
        return Err(missing(format!(
            "model maps {} inputs to {} outputs, config needs {} to {}",
            model.input_dim(),
            model.output_dim(),
            cfg.training.input_indices.len(),
            cfg.input_dim()
        )));
    }
    match bound {
        Some(b) => Ok(GpUncertainty {
            model,
            input_indices: cfg.training.input_indices.clone(),
            evaluator: b.evaluator()?,
        }),
        None => Ok(uncertainty_from_model(cfg, model)?.0),
    }
}

#[derive(Debug, Serialize)]
struct SimulateOutput<'a> {
    report: &'a RunReport,
    exponential_bound: ExponentialBoundCheck,
}

fn cmd_simulate(
    common: &Common,
    mode: ControllerMode,
    models: Option<&Path>,
) -> Result<(), CliError> {
    let loaded = common.load()?;
    let cfg = &loaded.config;
    let mut rec = Recorder::new(format!("simulate_{}", mode.as_str()));
    let setup = RunSetup::nominal(cfg, cfg.seed);
    let plant = setup.plant(cfg)?;
    let model_dir = models.map_or_else(|| common.out_dir.join("models"), Path::to_path_buf);
    let gp;
    let none = NoUncertaintyModel {
        dim: cfg.input_dim(),
    };
    let uncertainty: &dyn UncertaintyModel = if mode == ControllerMode::Ptsgpc {
        gp = load_uncertainty(cfg, &model_dir)?;
        &gp
    } else {
        &none
    };
    let trace = simulate(cfg, mode, &plant, uncertainty, &setup.initial_state)?;
    let settings = cfg.settings();
    let report = evaluate_run(
        &trace,
        &settings,
        cfg.sim.safety_tolerance,
        0,
        setup.offset.to_vec(),
    );
    let bound = exponential_bound_check(&trace, &settings);

    let trace_path = common.out_dir.join(format!("trace_{}.csv", mode.as_str()));
    write_trace_csv(&trace, create(&trace_path)?)?;
    rec.outputs.push(trace_path);
    let report_path = common
        .out_dir
        .join(format!("report_{}.json", mode.as_str()));
    write_json(
        &report_path,
        &SimulateOutput {
            report: &report,
            exponential_bound: bound,
        },
    )?;
    rec.outputs.push(report_path);

    for w in &report.windows {
        println!(
            "window {} [{:.3}, {:.3}]: safe start {}, min h1 {:.3e}, success {}",
            w.index, w.t0, w.t_last, w.safe_start, w.min_h1, w.success
        );
    }
    println!(
        "rescue {} (min h1 {:.3e}), maintenance {} (min h1 {:.3e}), relaxed steps {}",
        report.rescue,
        report.rescue_min_h1,
        report.maintenance,
        report.maintenance_min_h1,
        report.relaxed_steps
    );
    if let Some(reason) = &trace.truncated {
        println!("truncated: {reason}");
    }
    let manifest = rec.finish(
        &loaded,
        &common.out_dir,
        serde_json::json!({
            "mode": mode.as_str(),
            "models": (mode == ControllerMode::Ptsgpc).then(|| model_dir.display().to_string()),
            "initial_state": setup.initial_state,
            "offset": setup.offset,
        }),
    )?;
    println!("wrote {}", manifest.display());
    Ok(())
}

fn batch(
    cfg: &ExperimentConfig,
    mode: ControllerMode,
    runs: usize,
    trace_dir: Option<&Path>,
    outputs: &Mutex<Vec<PathBuf>>,
) -> Result<BatchReport, CliError> {
    if let Some(dir) = trace_dir {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    let report = run_monte_carlo(cfg, mode, runs, cfg.seed, |setup, trace| {
        let Some(dir) = trace_dir else { return Ok(()) };
        let path = dir.join(format!("run_{:04}_{}.csv", setup.run, mode.as_str()));
        let file = File::create(&path)?;
        write_trace_csv(trace, BufWriter::new(file))?;
        outputs.lock().expect("trace list poisoned").push(path);
        Ok(())
    });
    Ok(report)
}

fn summarize(batch: &BatchReport) {
    println!(
        "{}: {} runs, rescue rate {:.3}, maintenance rate {:.3}, containment {:.4}, h1_4 violations {}, failed {}",
        batch.mode.as_str(),
        batch.runs.len(),
        batch.rescue_rate(),
        batch.maintenance_rate(),
        batch.containment_fraction(),
        batch.violations_of(3, 1e-3),
        batch.failed_runs()
    );
}

fn batch_params(batch: &BatchReport) -> serde_json::Value {
    serde_json::json!({
        "mode": batch.mode.as_str(),
        "runs": batch.runs.len(),
        "rescue_rate": batch.rescue_rate(),
        "maintenance_rate": batch.maintenance_rate(),
        "containment": batch.containment_fraction(),
        "failed_runs": batch.failed_runs(),
    })
}

fn cmd_montecarlo(
    common: &Common,
    mode: ControllerMode,
    runs: Option<usize>,
    traces: bool,
) -> Result<(), CliError> {
    let loaded = common.load()?;
    let cfg = &loaded.config;
    let runs = runs.unwrap_or(cfg.montecarlo.runs);
    let mut rec = Recorder::new(format!("montecarlo_{}", mode.as_str()));
    let trace_dir = traces.then(|| common.out_dir.join(format!("traces_{}", mode.as_str())));
    let trace_paths = Mutex::new(Vec::new());
    let report = batch(cfg, mode, runs, trace_dir.as_deref(), &trace_paths)?;

    let path = common.out_dir.join(format!("batch_{}.csv", mode.as_str()));
    write_batch_csv(&report, create(&path)?)?;
    rec.outputs.push(path);
    let mut trace_paths = trace_paths.into_inner().expect("trace list poisoned");
    trace_paths.sort();
    rec.outputs.extend(trace_paths);
    summarize(&report);
    let manifest = rec.finish(&loaded, &common.out_dir, batch_params(&report))?;
    println!("wrote {}", manifest.display());
    Ok(())
}

fn cmd_compare(common: &Common, runs: Option<usize>) -> Result<(), CliError> {
    let loaded = common.load()?;
    let cfg = &loaded.config;
    let runs = runs.unwrap_or(cfg.montecarlo.runs);
    let mut rec = Recorder::new("compare");
    let unused = Mutex::new(Vec::new());
    let ptsc = batch(cfg, ControllerMode::Ptsc, runs, None, &unused)?;
    let ptsgpc = batch(cfg, ControllerMode::Ptsgpc, runs, None, &unused)?;

    for (b, name) in [(&ptsc, "compare_ptsc.csv"), (&ptsgpc, "compare_ptsgpc.csv")] {
        let path = common.out_dir.join(name);
        write_batch_csv(b, create(&path)?)?;
        rec.outputs.push(path);
        summarize(b);
    }
    let path = common.out_dir.join("compare_paired.csv");
    write_paired_csv(&ptsc, &ptsgpc, create(&path)?)?;
    rec.outputs.push(path);
    let manifest = rec.finish(
        &loaded,
        &common.out_dir,
        serde_json::json!({ "ptsc": batch_params(&ptsc), "ptsgpc": batch_params(&ptsgpc) }),
    )?;
    println!("wrote {}", manifest.display());
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Train(common) => cmd_train(common),
        Command::Simulate {
            common,
            mode,
            models,
        } => cmd_simulate(common, *mode, models.as_deref()),
        Command::Montecarlo {
            common,
            mode,
            runs,
            traces,
        } => cmd_montecarlo(common, *mode, *runs, *traces),
        Command::Compare { common, runs } => cmd_compare(common, *runs),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
