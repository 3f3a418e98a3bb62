//! Experiment runner: flags or a JSON config in, JSON summaries and CSV tables out.
//!
//! Every output file has the same envelope:
//!
//! ```text
//! { "config": {...}, "timestamp": <unix seconds>, "correlation": {...} | null, "result": {...} }
//! ```
//!
//! `timestamp` is the only field that differs between two runs of the same config.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::entropy::{self, Lemma1Map};
use crate::error::{Error, Result};
use crate::jacobian;
use crate::model::{CorrelationSet, Dims};
use crate::prelog;
use crate::recovery::{self, NewtonOptions, PilotSystem};
use crate::rng::derive_seed;
use crate::simobound;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_ASSERTION: i32 = 2;

const Z_SEED_TAG: u64 = 0x7a;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Subcommand)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Closed-form pre-log values and the counting predictor.
    Predict,
    /// Jacobian rank over random points.
    Genericity,
    /// Multistart Newton recovery of (s, x_D) from a noiseless output.
    Recover,
    /// Entropy-bound check on scalar test maps.
    Lemma1,
    /// Slope of E[log det] between the first and last SNR of the grid.
    HygxSlope,
    /// kNN mutual-information slope over the SNR grid.
    MiSlope,
    /// SIMO decomposition variance and covariance checks.
    SimoCheck,
    /// Every report above at desk-scale defaults, plus an index.
    All,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Predict => "predict",
            Command::Genericity => "genericity",
            Command::Recover => "recover",
            Command::Lemma1 => "lemma1",
            Command::HygxSlope => "hygx-slope",
            Command::MiSlope => "mi-slope",
            Command::SimoCheck => "simo-check",
            Command::All => "all",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KindArg {
    Constant,
    Generic,
}

/// Where the correlation set comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ZSource {
    Constant,
    Generic { seed: u64 },
    File { path: PathBuf },
}

impl ZSource {
    pub fn load(&self, dims: Dims) -> Result<CorrelationSet> {
        match self {
            ZSource::Constant => CorrelationSet::constant(dims),
            ZSource::Generic { seed } => CorrelationSet::generic_random(dims, *seed),
            ZSource::File { path } => {
                let text = fs::read_to_string(path).map_err(|e| {
                    Error::Config(format!("cannot read correlation file {}: {e}", path.display()))
                })?;
                let z = CorrelationSet::from_json(&text)?;
                if z.dims() != dims {
                    return Err(Error::Config(format!(
                        "correlation file has dimensions {}, run uses {dims}",
                        z.dims()
                    )));
                }
                Ok(z)
            }
        }
    }
}

/// A fully resolved run description. Reading it back reproduces the run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub command: Command,
    pub dims: Dims,
    pub z_source: ZSource,
    pub seed: u64,
    pub trials: u64,
    pub samples: usize,
    pub starts: usize,
    pub k: usize,
    pub rho_grid: Vec<f64>,
    pub tol: Option<f64>,
    pub heavy: bool,
    pub out: PathBuf,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.dims.validate()?;
        if self.rho_grid.is_empty() || self.rho_grid.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
            return Err(Error::Config("rho grid must be non-empty with positive finite entries".into()));
        }
        if self.k == 0 {
            return Err(Error::Config("k must be positive".into()));
        }
        if let Some(tol) = self.tol {
            if !(tol > 0.0) {
                return Err(Error::Config("tolerance must be positive".into()));
            }
        }
        Ok(())
    }

    fn rho_low_high(&self) -> (f64, f64) {
        (self.rho_grid[0], *self.rho_grid.last().unwrap())
    }
}

#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    #[arg(long = "T", global = true)]
    pub t: Option<usize>,
    #[arg(long = "R", global = true)]
    pub r: Option<usize>,
    #[arg(long = "N", global = true)]
    pub n: Option<usize>,
    #[arg(long, value_enum, global = true)]
    pub kind: Option<KindArg>,
    /// Correlation set JSON; overrides --kind.
    #[arg(long, global = true)]
    pub zfile: Option<PathBuf>,
    /// Seed for the generic-random correlation set (default: derived from --seed).
    #[arg(long, global = true)]
    pub z_seed: Option<u64>,
    #[arg(long, env = "PRELOG_LAB_SEED", global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub trials: Option<u64>,
    #[arg(long, global = true)]
    pub samples: Option<usize>,
    #[arg(long, global = true)]
    pub starts: Option<usize>,
    #[arg(long, value_delimiter = ',', global = true)]
    pub rho_grid: Option<Vec<f64>>,
    #[arg(long, global = true)]
    pub k: Option<usize>,
    /// Newton residual tolerance (default scales with the output norm).
    #[arg(long, global = true)]
    pub tol: Option<f64>,
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads; 0 uses every core. Results do not depend on it.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    #[arg(long, global = true)]
    pub heavy: bool,
    /// Load a config written by a previous run; flags given here override it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Parser)]
#[command(name = "prelog-lab", version, about = "Pre-log experiments for block-fading MIMO channels")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub args: RunArgs,
}

struct Defaults {
    trials: u64,
    samples: usize,
    rho_grid: Vec<f64>,
}

fn defaults(command: Command) -> Defaults {
    let (trials, samples, rho_grid) = match command {
        Command::Genericity => (1000, 100_000, vec![1e4, 1e6]),
        Command::HygxSlope => (10_000, 100_000, vec![1e4, 1e6]),
        Command::SimoCheck => (100_000, 100_000, vec![100.0]),
        Command::MiSlope => (10_000, 100_000, vec![1e4, 1e5, 1e6, 1e7, 1e8]),
        _ => (1000, 100_000, vec![1e4, 1e6]),
    };
    Defaults { trials, samples, rho_grid }
}

impl Cli {
    /// Merges flags over an optional config file over built-in defaults.
    pub fn resolve(&self) -> Result<ExperimentConfig> {
        let a = &self.args;
        let base: Option<ExperimentConfig> = match &a.config {
            Some(path) => Some(read_config(path)?),
            None => None,
        };
        let def = defaults(self.command);
        let base_dims = base.as_ref().map(|b| b.dims);
        let dims = Dims::new(
            a.t.or(base_dims.map(|d| d.t)).unwrap_or(2),
            a.r.or(base_dims.map(|d| d.r)).unwrap_or(3),
            a.n.or(base_dims.map(|d| d.n)).unwrap_or(4),
        )?;
        let seed = a.seed.or(base.as_ref().map(|b| b.seed)).unwrap_or(0);
        let z_source = if let Some(path) = &a.zfile {
            ZSource::File { path: path.clone() }
        } else {
            match (a.kind, &base) {
                (Some(KindArg::Constant), _) => ZSource::Constant,
                (Some(KindArg::Generic), _) => ZSource::Generic {
                    seed: a.z_seed.unwrap_or_else(|| derive_seed(seed, Z_SEED_TAG)),
                },
                (None, Some(b)) => match (&b.z_source, a.z_seed) {
                    (ZSource::Generic { .. }, Some(s)) => ZSource::Generic { seed: s },
                    (src, _) => src.clone(),
                },
                (None, None) => ZSource::Generic {
                    seed: a.z_seed.unwrap_or_else(|| derive_seed(seed, Z_SEED_TAG)),
                },
            }
        };
        let config = ExperimentConfig {
            command: self.command,
            dims,
            z_source,
            seed,
            trials: a.trials.or(base.as_ref().map(|b| b.trials)).unwrap_or(def.trials),
            samples: a.samples.or(base.as_ref().map(|b| b.samples)).unwrap_or(def.samples),
            starts: a.starts.or(base.as_ref().map(|b| b.starts)).unwrap_or(1000),
            k: a.k.or(base.as_ref().map(|b| b.k)).unwrap_or(entropy::DEFAULT_K),
            rho_grid: a
                .rho_grid
                .clone()
                .or(base.as_ref().map(|b| b.rho_grid.clone()))
                .unwrap_or(def.rho_grid),
            tol: a.tol.or(base.as_ref().and_then(|b| b.tol)),
            heavy: a.heavy || base.as_ref().is_some_and(|b| b.heavy),
            out: a
                .out
                .clone()
                .or(base.as_ref().map(|b| b.out.clone()))
                .unwrap_or_else(|| PathBuf::from(".")),
        };
        config.validate()?;
        Ok(config)
    }
}

/// Reads a bare config or the `config` field of a previous run's output.
pub fn read_config(path: &Path) -> Result<ExperimentConfig> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
    let mut value: Value = serde_json::from_str(&text)?;
    if let Some(inner) = value.get_mut("config") {
        value = inner.take();
    }
    let config: ExperimentConfig = serde_json::from_value(value)?;
    config.validate()?;
    Ok(config)
}

#[derive(Debug, Serialize)]
struct Envelope<'a, T: Serialize> {
    config: &'a ExperimentConfig,
    timestamp: u64,
    correlation: Option<Value>,
    result: &'a T,
}

fn timestamp() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

fn correlation_value(z: &CorrelationSet) -> Result<Value> {
    Ok(serde_json::from_str(&z.to_json()?)?)
}

fn write_json<T: Serialize>(
    config: &ExperimentConfig,
    name: &str,
    z: Option<&CorrelationSet>,
    result: &T,
) -> Result<PathBuf> {
    let env = Envelope {
        config,
        timestamp: timestamp(),
        correlation: z.map(correlation_value).transpose()?,
        result,
    };
    let path = config.out.join(format!("{name}.json"));
    let mut text = serde_json::to_string_pretty(&env)?;
    text.push('\n');
    fs::write(&path, text)?;
    log::info!("wrote {}", path.display());
    Ok(path)
}

fn write_text(config: &ExperimentConfig, name: &str, text: &str) -> Result<PathBuf> {
    let path = config.out.join(name);
    fs::write(&path, text)?;
    log::info!("wrote {}", path.display());
    Ok(path)
}

/// Files written by one command.
#[derive(Debug, Clone, Serialize)]
pub struct RunOutput {
    pub command: Command,
    pub json: PathBuf,
    pub csv: Vec<PathBuf>,
}

#[derive(Debug, Serialize)]
struct PredictResult {
    report: prelog::PrelogReport,
    upper_bound: simobound::UpperBoundReport,
}

fn run_predict(c: &ExperimentConfig) -> Result<RunOutput> {
    let result = PredictResult {
        report: prelog::report(c.dims),
        upper_bound: simobound::upper_bound_report(c.dims)?,
    };
    let json = write_json(c, "predict", None, &result)?;
    let csv = write_text(
        c,
        "predict.csv",
        &format!("{}\n{}\n", prelog::PrelogReport::CSV_HEADER, result.report.csv_row()),
    )?;
    Ok(RunOutput {
        command: Command::Predict,
        json,
        csv: vec![csv],
    })
}

fn run_genericity(c: &ExperimentConfig, z: &CorrelationSet, name: &str) -> Result<RunOutput> {
    let pattern = jacobian::default_pilot_pattern(c.dims)?;
    let report = jacobian::genericity_test(z, &pattern, c.trials, c.seed)?;
    let json = write_json(c, name, Some(z), &report)?;
    let csv = write_text(c, &format!("{name}_trials.csv"), &report.csv())?;
    Ok(RunOutput {
        command: Command::Genericity,
        json,
        csv: vec![csv],
    })
}

#[derive(Debug, Serialize)]
struct RecoverResult {
    truth: Vec<num_complex::Complex64>,
    solve: recovery::SolveResult,
}

fn run_recover(c: &ExperimentConfig, z: &CorrelationSet) -> Result<RunOutput> {
    let system = PilotSystem::new(z.clone(), jacobian::default_pilot_pattern(c.dims)?)?;
    let (truth, ybar) = system.random_instance(derive_seed(c.seed, 1), 0)?;
    let opts = NewtonOptions {
        tol: c.tol,
        ..NewtonOptions::default()
    };
    let solve = recovery::enumerate_solutions(&system, &ybar, c.starts, c.seed, Some(&truth), &opts)?;
    let csv = write_text(c, "recover_roots.csv", &solve.roots_csv())?;
    let within = solve.within_bezout_cap();
    let (count, cap) = (solve.distinct_count, solve.bezout_cap);
    let json = write_json(c, "recover", Some(z), &RecoverResult { truth, solve })?;
    if !within {
        return Err(Error::Assertion(format!(
            "{count} distinct roots exceed the Bezout cap {cap}"
        )));
    }
    Ok(RunOutput {
        command: Command::Recover,
        json,
        csv: vec![csv],
    })
}

fn run_lemma1(c: &ExperimentConfig) -> Result<RunOutput> {
    let reports = Lemma1Map::ALL
        .iter()
        .enumerate()
        .map(|(i, &map)| entropy::lemma1_check(map, c.samples, c.k, derive_seed(c.seed, i as u64)))
        .collect::<Result<Vec<_>>>()?;
    Ok(RunOutput {
        command: Command::Lemma1,
        json: write_json(c, "lemma1", None, &reports)?,
        csv: vec![],
    })
}

#[derive(Debug, Serialize)]
struct HygxResult {
    slope: entropy::HygxSlope,
    target_slope: usize,
    jensen: entropy::JensenCheck,
}

fn run_hygx(c: &ExperimentConfig, z: &CorrelationSet) -> Result<RunOutput> {
    let (lo, hi) = c.rho_low_high();
    let slope = entropy::hygx_slope(z, lo, hi, c.trials, c.seed)?;
    let jensen = entropy::jensen_check(z, hi, c.trials, c.seed)?;
    let holds = jensen.holds();
    let json = write_json(
        c,
        "hygx_slope",
        Some(z),
        &HygxResult {
            slope,
            target_slope: c.dims.tr(),
            jensen,
        },
    )?;
    if !holds {
        return Err(Error::Assertion("E[log det] exceeds log E[det]".into()));
    }
    Ok(RunOutput {
        command: Command::HygxSlope,
        json,
        csv: vec![],
    })
}

fn run_mi(c: &ExperimentConfig, z: &CorrelationSet) -> Result<RunOutput> {
    let report = entropy::mi_slope(z, &c.rho_grid, c.samples, c.k, c.seed)?;
    let csv = write_text(c, "mi_slope.csv", &report.csv())?;
    Ok(RunOutput {
        command: Command::MiSlope,
        json: write_json(c, "mi_slope", Some(z), &report)?,
        csv: vec![csv],
    })
}

fn run_simo(c: &ExperimentConfig, z: &CorrelationSet) -> Result<RunOutput> {
    let report = simobound::simo_check(z, c.rho_grid[0], c.trials, c.seed)?;
    let analytic = report.max_variance_error_analytic;
    let json = write_json(c, "simo_check", Some(z), &report)?;
    if analytic > 1e-12 {
        return Err(Error::Assertion(format!(
            "composite noise variance is off by {analytic:e}"
        )));
    }
    Ok(RunOutput {
        command: Command::SimoCheck,
        json,
        csv: vec![],
    })
}

#[derive(Debug, Serialize)]
struct BundleIndex {
    reports: Vec<RunOutput>,
}

fn run_all(c: &ExperimentConfig, z: &CorrelationSet) -> Result<RunOutput> {
    let generic = match &c.z_source {
        ZSource::Constant => CorrelationSet::generic_random(c.dims, derive_seed(c.seed, Z_SEED_TAG))?,
        _ => z.clone(),
    };
    let constant = CorrelationSet::constant(c.dims)?;
    let with_trials = |trials: u64, rho_grid: Vec<f64>| ExperimentConfig {
        trials,
        rho_grid,
        ..c.clone()
    };
    let hygx_cfg = with_trials(10_000, vec![1e4, 1e6]);
    let simo_cfg = with_trials(100_000, vec![100.0]);
    let gen_cfg = with_trials(1000, c.rho_grid.clone());

    let mut reports = vec![
        run_predict(c)?,
        run_genericity(&gen_cfg, &generic, "genericity_generic")?,
        run_genericity(&gen_cfg, &constant, "genericity_constant")?,
        run_recover(c, &generic)?,
        run_lemma1(c)?,
        run_hygx(&hygx_cfg, &generic)?,
        run_simo(&simo_cfg, &generic)?,
    ];
    if c.heavy {
        let mi_cfg = with_trials(c.trials, defaults(Command::MiSlope).rho_grid);
        reports.push(run_mi(&mi_cfg, &generic)?);
    }
    let json = write_json(c, "index", None, &BundleIndex { reports })?;
    Ok(RunOutput {
        command: Command::All,
        json,
        csv: vec![],
    })
}

/// Runs one resolved config and returns the files it wrote.
pub fn run(config: &ExperimentConfig) -> Result<RunOutput> {
    config.validate()?;
    fs::create_dir_all(&config.out)?;
    log::info!("running {} at {}", config.command.name(), config.dims);
    let z = || config.z_source.load(config.dims);
    match config.command {
        Command::Predict => run_predict(config),
        Command::Genericity => run_genericity(config, &z()?, "genericity"),
        Command::Recover => run_recover(config, &z()?),
        Command::Lemma1 => run_lemma1(config),
        Command::HygxSlope => run_hygx(config, &z()?),
        Command::MiSlope => run_mi(config, &z()?),
        Command::SimoCheck => run_simo(config, &z()?),
        Command::All => run_all(config, &z()?),
    }
}

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Assertion(_) => EXIT_ASSERTION,
        _ => EXIT_USAGE,
    }
}

/// Parses `args`, runs the command on a pool of `--workers` threads and
/// returns the process exit status.
pub fn main_with_args<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let outcome = cli.resolve().and_then(|config| {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cli.args.workers.unwrap_or(0))
            .build()
            .map_err(|e| Error::Config(e.to_string()))?;
        pool.install(|| run(&config))
    });
    match outcome {
        Ok(out) => {
            println!("{}", out.json.display());
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

/// Reads a JSON file produced by [`run`] and drops the timestamp.
pub fn strip_timestamp(path: &Path) -> Result<String> {
    let text = fs::read_to_string(path)?;
    Ok(text
        .lines()
        .filter(|l| !l.trim_start().starts_with("\"timestamp\""))
        .collect::<Vec<_>>()
        .join("\n"))
}
