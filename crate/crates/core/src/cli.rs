//! Command-line entry points: `train`, `eval` and `sweep`.
//!
//! Every command is a pure function of (config file, flags, seed); rerunning
//! with the same inputs reproduces outputs byte for byte. Exit codes:
//! 0 success, 2 configuration error, 3 missing artifact.

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};
use std::path::{Path, PathBuf};

use crate::domain::{
    validate_config, DualMultipliers, LatencyMode, LogBase, NetworkConfig, NetworkRealization,
};
use crate::error::{Error, Result};
use crate::execution::BaselineKind;
use crate::policy::{load_checkpoint, save_checkpoint};
use crate::report::{
    aggregate_curves, curves_to_csv, evaluate_method, sweep_table, table_to_csv, violation_rates,
    MethodSpec,
};
use crate::seeds::{self, stream};
use crate::training::{
    sample_realizations, train_state_augmented, train_vanilla_pd, TrainConfig, TrainOutcome,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_MISSING_ARTIFACT: i32 = 3;

/// Experiment configuration file: network parameters plus training
/// hyperparameters and set sizes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub network: NetworkConfig,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default = "default_num_train")]
    pub num_train: usize,
    #[serde(default = "default_num_val")]
    pub num_val: usize,
}

fn default_num_train() -> usize {
    128
}

fn default_num_val() -> usize {
    16
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            network: NetworkConfig::default(),
            train: TrainConfig::default(),
            num_train: default_num_train(),
            num_val: default_num_val(),
        }
    }
}

impl ExperimentConfig {
    pub fn load<P: AsRef<Path>>(path: P) -> Result<Self> {
        let path = path.as_ref();
        let data = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read {}: {e}", path.display())))?;
        let config: ExperimentConfig =
            serde_json::from_str(&data).map_err(|e| Error::config(format!("{e}")))?;
        validate_config(&config.network).map_err(Error::Config)?;
        Ok(config)
    }
}

#[derive(Debug, Parser)]
#[command(name = "slicelab", about = "Wi-Fi network slicing laboratory", version)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train a slicing policy offline.
    Train(TrainArgs),
    /// Evaluate a method on sampled test realizations.
    Eval(EvalArgs),
    /// Violation-rate table over a QoS tolerance grid.
    Sweep(SweepArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Algo {
    Sapd,
    Pd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Method {
    Sapd,
    Pd,
    Uniform,
    Proportional,
    Tw,
}

#[derive(Debug, Args)]
struct CommonArgs {
    /// Experiment configuration file (JSON); defaults are used when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Root seed overriding the config file.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (defaults to all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Evaluate packet latency in its literal ratio form instead of
    /// queueing delay plus airtime.
    #[arg(long, default_value_t = false)]
    literal_latency: bool,
    /// Shannon-rate logarithm base.
    #[arg(long, value_parser = parse_log_base)]
    log_base: Option<LogBase>,
}

fn parse_log_base(s: &str) -> std::result::Result<LogBase, String> {
    match s {
        "2" => Ok(LogBase::Two),
        "e" => Ok(LogBase::Natural),
        other => Err(format!("log base must be 2 or e, got {other}")),
    }
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Training algorithm.
    #[arg(long, value_enum, default_value_t = Algo::Sapd)]
    algo: Algo,
    /// Output directory for checkpoint and logs.
    #[arg(long)]
    out: PathBuf,
    /// Number of training epochs, overriding the config file.
    #[arg(long)]
    epochs: Option<usize>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Method to execute.
    #[arg(long, value_enum)]
    method: Method,
    /// Checkpoint path (required for learned methods).
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Number of test realizations.
    #[arg(long, default_value_t = 128)]
    num_test: usize,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// QoS grid as `r_min:ell_max` pairs, e.g. `0.7:5,0.9:10,0.9:20,1.0:10`.
    #[arg(long, default_value = "0.7:5,0.9:10,0.9:20,1.0:10")]
    grid: String,
    /// Methods to include (comma separated).
    #[arg(long, default_value = "sapd,pd,uniform,proportional,tw")]
    methods: String,
    /// State-augmented checkpoint path.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Conventional primal-dual checkpoint path.
    #[arg(long)]
    checkpoint_pd: Option<PathBuf>,
    /// Number of test realizations.
    #[arg(long, default_value_t = 128)]
    num_test: usize,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

/// Parses `0.7:5,0.9:10` style grid specs.
pub fn parse_grid(spec: &str) -> Result<Vec<(f64, f64)>> {
    let mut grid = Vec::new();
    for part in spec.split(',') {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        let (r, l) = part
            .split_once(':')
            .ok_or_else(|| Error::config(format!("grid entry `{part}` is not r_min:ell_max")))?;
        let r_min: f64 = r
            .trim()
            .parse()
            .map_err(|_| Error::config(format!("bad r_min in grid entry `{part}`")))?;
        let ell_max: f64 = l
            .trim()
            .parse()
            .map_err(|_| Error::config(format!("bad ell_max in grid entry `{part}`")))?;
        if r_min <= 0.0 || ell_max <= 0.0 {
            return Err(Error::config(format!(
                "grid entry `{part}` must be positive"
            )));
        }
        grid.push((r_min, ell_max));
    }
    if grid.is_empty() {
        return Err(Error::config("empty QoS grid"));
    }
    Ok(grid)
}

fn load_experiment(common: &CommonArgs) -> Result<ExperimentConfig> {
    let mut experiment = match &common.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = common.seed {
        experiment.network.rng_seed = seed;
        experiment.train.seed = seed;
    }
    if common.literal_latency {
        experiment.network.latency_mode = LatencyMode::Literal;
    }
    if let Some(base) = common.log_base {
        experiment.network.log_base = base;
    }
    validate_config(&experiment.network).map_err(Error::Config)?;
    Ok(experiment)
}

fn init_threads(common: &CommonArgs) {
    if let Some(threads) = common.threads {
        // Ignore failure: the global pool can only be initialized once per
        // process, which is fine for repeated in-process CLI invocations.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global();
    }
}

/// Samples the disjoint train/validation/test populations from the root
/// seed. Streams are deterministic, so eval reuses the identical test set
/// across methods for paired comparisons.
pub fn sample_sets(
    config: &ExperimentConfig,
    num_test: usize,
) -> Result<(
    Vec<NetworkRealization>,
    Vec<NetworkRealization>,
    Vec<NetworkRealization>,
)> {
    let net = &config.network;
    let mut train_rng = seeds::rng(net.rng_seed, stream::REALIZATION, 0);
    let mut val_rng = seeds::rng(net.rng_seed, stream::REALIZATION, 1);
    let mut test_rng = seeds::rng(net.rng_seed, stream::REALIZATION, 2);
    let train = sample_realizations(config.num_train.max(1), net, &mut train_rng)?;
    let val = sample_realizations(config.num_val.max(1), net, &mut val_rng)?;
    let test = sample_realizations(num_test.max(1), net, &mut test_rng)?;
    Ok((train, val, test))
}

#[derive(Debug, Serialize, Deserialize)]
struct PdMeta {
    lambda_h: f64,
    lambda_l: f64,
}

fn pd_meta_path(checkpoint: &Path) -> PathBuf {
    checkpoint.with_file_name("final_lambda.json")
}

fn config_hash(config: &ExperimentConfig) -> Result<String> {
    let json = serde_json::to_string(config)?;
    let mut hasher = DefaultHasher::new();
    json.hash(&mut hasher);
    Ok(format!("{:016x}", hasher.finish()))
}

fn write_summary(
    out_dir: &Path,
    config: &ExperimentConfig,
    extra: serde_json::Value,
) -> Result<()> {
    let summary = serde_json::json!({
        "version": format!("slicelab-{}", env!("CARGO_PKG_VERSION")),
        "seed": config.network.rng_seed,
        "config_hash": config_hash(config)?,
        "run": extra,
    });
    std::fs::write(
        out_dir.join("summary.json"),
        serde_json::to_string_pretty(&summary)?,
    )?;
    Ok(())
}

fn cmd_train(args: &TrainArgs) -> Result<()> {
    init_threads(&args.common);
    let mut experiment = load_experiment(&args.common)?;
    if let Some(epochs) = args.epochs {
        experiment.train.num_epochs = epochs;
    }
    let (train_set, val_set, _) = sample_sets(&experiment, 1)?;
    let outcome: TrainOutcome = match args.algo {
        Algo::Sapd => train_state_augmented(&train_set, &val_set, &experiment.train)?,
        Algo::Pd => train_vanilla_pd(&train_set, &val_set, &experiment.train)?,
    };

    std::fs::create_dir_all(&args.out)?;
    save_checkpoint(&outcome.params, args.out.join("checkpoint.json"))?;
    std::fs::write(args.out.join("epochs.csv"), outcome.log.to_csv())?;
    if args.algo == Algo::Pd {
        let mut duals = String::from("step,lambda_h,lambda_l\n");
        for (k, lambda) in outcome.dual_trajectory.iter().enumerate() {
            duals.push_str(&format!("{k},{:.6},{:.6}\n", lambda.lambda_h, lambda.lambda_l));
        }
        std::fs::write(args.out.join("duals.csv"), duals)?;
        std::fs::write(
            args.out.join("final_lambda.json"),
            serde_json::to_string(&PdMeta {
                lambda_h: outcome.pd_lambda.lambda_h,
                lambda_l: outcome.pd_lambda.lambda_l,
            })?,
        )?;
    }
    write_summary(
        &args.out,
        &experiment,
        serde_json::json!({
            "command": "train",
            "algo": format!("{:?}", args.algo).to_lowercase(),
            "epochs": experiment.train.num_epochs,
            "num_train": experiment.num_train,
            "num_val": experiment.num_val,
        }),
    )?;
    Ok(())
}

fn load_method(
    method: Method,
    checkpoint: Option<&PathBuf>,
    checkpoint_pd: Option<&PathBuf>,
    eta_lambda: f64,
) -> Result<MethodSpec> {
    match method {
        Method::Uniform => Ok(MethodSpec::Baseline(BaselineKind::Uniform)),
        Method::Proportional => Ok(MethodSpec::Baseline(BaselineKind::Proportional)),
        Method::Tw => Ok(MethodSpec::Baseline(BaselineKind::TrafficWeighted)),
        Method::Sapd => {
            let path = checkpoint.ok_or_else(|| {
                Error::MissingArtifact("sapd requires --checkpoint".to_string())
            })?;
            Ok(MethodSpec::SaPd {
                params: load_checkpoint(path)?,
                eta_lambda,
            })
        }
        Method::Pd => {
            let path = checkpoint_pd.or(checkpoint).ok_or_else(|| {
                Error::MissingArtifact("pd requires --checkpoint".to_string())
            })?;
            let params = load_checkpoint(path)?;
            let meta_path = pd_meta_path(path);
            let meta: PdMeta = serde_json::from_str(
                &std::fs::read_to_string(&meta_path).map_err(|e| {
                    Error::MissingArtifact(format!("{}: {e}", meta_path.display()))
                })?,
            )?;
            Ok(MethodSpec::Pd(
                params,
                DualMultipliers::new(meta.lambda_h, meta.lambda_l)?,
            ))
        }
    }
}

fn cmd_eval(args: &EvalArgs) -> Result<()> {
    init_threads(&args.common);
    let experiment = load_experiment(&args.common)?;
    let method = load_method(
        args.method,
        args.checkpoint.as_ref(),
        args.checkpoint.as_ref(),
        experiment.train.eta_lambda,
    )?;
    let (_, _, test_set) = sample_sets(&experiment, args.num_test)?;
    let qos = experiment.network.qos;
    let runs = evaluate_method(&method, &test_set, &qos)?;

    std::fs::create_dir_all(&args.out)?;
    let mut jsonl = String::new();
    for run in &runs {
        jsonl.push_str(&run.trajectory.to_jsonl()?);
    }
    std::fs::write(args.out.join("trajectories.jsonl"), jsonl)?;

    let rates = violation_rates(&runs, &qos)?;
    let table = table_to_csv(&[crate::report::SweepRow {
        method: method.name().to_string(),
        r_min: qos.r_min,
        ell_max: qos.ell_max,
        h_inst: rates.h_inst,
        h_erg: rates.h_erg,
        l_inst: rates.l_inst,
        l_erg: rates.l_erg,
    }]);
    std::fs::write(args.out.join("table.csv"), table)?;

    if runs.len() >= 2 {
        let trajectories: Vec<&crate::execution::Trajectory> =
            runs.iter().map(|r| &r.trajectory).collect();
        let curves = aggregate_curves(&trajectories)?;
        std::fs::write(
            args.out.join("curves.csv"),
            curves_to_csv(method.name(), &curves),
        )?;
    }
    write_summary(
        &args.out,
        &experiment,
        serde_json::json!({
            "command": "eval",
            "method": method.name(),
            "num_test": args.num_test,
            "r_min": qos.r_min,
            "ell_max": qos.ell_max,
        }),
    )?;
    Ok(())
}

fn cmd_sweep(args: &SweepArgs) -> Result<()> {
    init_threads(&args.common);
    let experiment = load_experiment(&args.common)?;
    let grid = parse_grid(&args.grid)?;
    let mut methods = Vec::new();
    for name in args.methods.split(',') {
        let name = name.trim();
        if name.is_empty() {
            continue;
        }
        let method = match name {
            "sapd" => Method::Sapd,
            "pd" => Method::Pd,
            "uniform" => Method::Uniform,
            "proportional" => Method::Proportional,
            "tw" => Method::Tw,
            other => return Err(Error::config(format!("unknown method `{other}`"))),
        };
        methods.push(load_method(
            method,
            args.checkpoint.as_ref(),
            args.checkpoint_pd.as_ref(),
            experiment.train.eta_lambda,
        )?);
    }
    if methods.is_empty() {
        return Err(Error::config("no methods selected"));
    }
    let (_, _, test_set) = sample_sets(&experiment, args.num_test)?;
    let rows = sweep_table(&methods, &grid, &test_set)?;
    std::fs::create_dir_all(&args.out)?;
    std::fs::write(args.out.join("table.csv"), table_to_csv(&rows))?;
    write_summary(
        &args.out,
        &experiment,
        serde_json::json!({
            "command": "sweep",
            "grid": args.grid,
            "methods": args.methods,
            "num_test": args.num_test,
        }),
    )?;
    Ok(())
}

/// Maps an error to its exit code.
fn exit_code_for(error: &Error) -> i32 {
    match error {
        Error::Config(_) | Error::Precondition(_) => EXIT_CONFIG,
        Error::MissingArtifact(_) => EXIT_MISSING_ARTIFACT,
        _ => 1,
    }
}

/// Runs the CLI and returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    let result = match &cli.command {
        Command::Train(args) => cmd_train(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Sweep(args) => cmd_sweep(args),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(error) => {
            eprintln!("error: {error}");
            exit_code_for(&error)
        }
    }
}
