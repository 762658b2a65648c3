//! The `pmdlab` command line.
//!
//! Usage errors (bad flags, malformed spec files, refusing to overwrite a store)
//! exit with status 2; every other failure exits with status 1.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use super::report::{
    emit_frequency, emit_heatmap, emit_min_temp, emit_quantiles, emit_robustness, min_temp_points,
    SweepResults,
};
use super::spec::{Preset, SweepSpec};
use super::store::{code_version, write_ndjson};
use super::sweep::{run_sweep, SweepOptions};
use super::{DEFAULT_OUT_DIR, OUT_ENV_VAR};
use crate::agent::{
    evaluate, train_and_evaluate, AgentConfig, IterationLog, ScheduleMode, TemperatureSchedule,
};
use crate::env::{EnvConfig, EnvKind};
use crate::error::{Error, Result};
use crate::metrics::{
    normalize_return, TemperatureAxis, DEFAULT_SUCCESS_THRESHOLD, LOOSE_SUCCESS_THRESHOLD,
};
use crate::neural::{Checkpoint, Mlp, PolicyHead};
use crate::regularizers::{DriftSpec, RegularizerSpec};

pub const RECORD_FILE: &str = "record.json";
pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const TRAIN_LOG_FILE: &str = "train_log.ndjson";

#[derive(Debug, Parser)]
#[command(
    name = "pmdlab",
    version,
    about = "Regularized mirror-descent policy optimization lab"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train one configuration and write its record, checkpoint and log.
    Train(TrainArgs),
    /// Run (or resume) a temperature sweep described by a JSON spec.
    Sweep(SweepArgs),
    /// Derive CSV reports from one or more sweep stores.
    Report(ReportArgs),
    /// Evaluate a saved policy checkpoint.
    Eval(EvalArgs),
    /// Print a sweep spec to start from.
    Template(TemplateArgs),
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Environment id such as `cartpole`, `catch-20x10` or `cartpole@x0.4`.
    #[arg(long, default_value = "cartpole", value_parser = parse_env)]
    pub env: EnvConfig,
    #[arg(long = "h", default_value = "neg_shannon", value_parser = parse_regularizer)]
    pub regularizer: RegularizerSpec,
    #[arg(long, default_value = "rkl", value_parser = parse_drift)]
    pub drift: DriftSpec,
    #[arg(long, default_value_t = 0.01)]
    pub alpha: f64,
    #[arg(long, default_value_t = 0.1)]
    pub lambda: f64,
    #[arg(long, default_value = "constant", value_parser = parse_mode)]
    pub alpha_schedule: ScheduleMode,
    #[arg(long, default_value = "constant", value_parser = parse_mode)]
    pub lambda_schedule: ScheduleMode,
    /// Critic targets ignore the MDP regularizer.
    #[arg(long)]
    pub apmd: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Total environment steps (default 1e6).
    #[arg(long)]
    pub steps: Option<u64>,
    #[arg(long, default_value_t = 10)]
    pub episodes: usize,
    /// Output directory; defaults to `$PMDLAB_OUT/train-<env>-<config>-s<seed>`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub spec: PathBuf,
    /// Worker threads; 0 uses every core.
    #[arg(long, default_value_t = 1)]
    pub parallelism: usize,
    #[arg(long)]
    pub resume: bool,
    /// Overrides grids, seeds and step budget of the spec file.
    #[arg(long, value_parser = parse_preset)]
    pub preset: Option<Preset>,
    /// Store directory; defaults to `$PMDLAB_OUT/<sweep_id>`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ReportKind {
    Heatmap,
    Robustness,
    Frequency,
    Quantiles,
    #[value(name = "min_temp", alias = "min-temp")]
    MinTemp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AxisArg {
    Alpha,
    Lambda,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long, required = true, num_args = 1..)]
    pub store: Vec<PathBuf>,
    #[arg(long, value_enum)]
    pub kind: ReportKind,
    /// Temperature whose regression fills the fit columns of `min_temp`.
    #[arg(long, value_enum, default_value = "alpha")]
    pub axis: AxisArg,
    /// Success threshold for `min_temp`.
    #[arg(long, conflicts_with = "loose")]
    pub threshold: Option<f64>,
    /// Use the looser 0.75 success threshold for `min_temp`.
    #[arg(long)]
    pub loose: bool,
    /// Write the CSV here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long, value_parser = parse_env)]
    pub env: EnvConfig,
    #[arg(long, default_value_t = 10)]
    pub episodes: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct TemplateArgs {
    #[arg(long, default_value = "sweep")]
    pub id: String,
    #[arg(long = "h", default_value = "neg_shannon", value_parser = parse_regularizer)]
    pub regularizer: RegularizerSpec,
    #[arg(long, default_value = "rkl", value_parser = parse_drift)]
    pub drift: DriftSpec,
    #[arg(long, default_value = "desk", value_parser = parse_preset)]
    pub preset: Preset,
}

fn parse_regularizer(s: &str) -> std::result::Result<RegularizerSpec, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_drift(s: &str) -> std::result::Result<DriftSpec, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_mode(s: &str) -> std::result::Result<ScheduleMode, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_preset(s: &str) -> std::result::Result<Preset, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_env(s: &str) -> std::result::Result<EnvConfig, String> {
    parse_env_id(s).map_err(|e| e.to_string())
}

/// Inverse of [`EnvConfig::id`]: `kind[-size][@x<scale>][/t<cap>]`.
pub fn parse_env_id(id: &str) -> Result<EnvConfig> {
    let bad = |why: &str| Error::Config(format!("bad environment id '{id}': {why}"));
    let (rest, cap) = match id.split_once("/t") {
        Some((r, c)) => (r, Some(c.parse::<usize>().map_err(|_| bad("step cap"))?)),
        None => (id, None),
    };
    let (rest, scale) = match rest.split_once("@x") {
        Some((r, s)) => (r, s.parse::<f64>().map_err(|_| bad("reward scale"))?),
        None => (rest, 1.0),
    };
    let (name, size) = match rest.split_once('-') {
        Some((n, s)) => (n, Some(s)),
        None => (rest, None),
    };
    let kind: EnvKind = name.parse()?;
    let mut env = EnvConfig::new(kind).with_reward_scale(scale);
    match (kind, size) {
        (_, None) => {}
        (EnvKind::Catch, Some(s)) => {
            let (r, c) = s
                .split_once('x')
                .ok_or_else(|| bad("catch size is ROWSxCOLS"))?;
            env = env.with_catch_size(
                r.parse().map_err(|_| bad("catch rows"))?,
                c.parse().map_err(|_| bad("catch columns"))?,
            );
        }
        (EnvKind::DeepSea, Some(s)) => {
            env = env.with_deepsea_size(s.parse().map_err(|_| bad("deepsea size"))?);
        }
        (_, Some(_)) => return Err(bad("only catch and deepsea take a size")),
    }
    env.max_episode_steps = cap;
    env.validate()?;
    Ok(env)
}

/// Output of `pmdlab train`, stored as `record.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainRecord {
    pub code_version: String,
    pub env: EnvConfig,
    pub env_id: String,
    pub seed: u64,
    pub config: AgentConfig,
    pub eval_returns: Vec<f64>,
    pub mean_return: f64,
    pub mean_norm_return: f64,
    pub wall_seconds: f64,
}

fn default_out(sub: &str) -> PathBuf {
    let base = std::env::var_os(OUT_ENV_VAR)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR));
    base.join(sub)
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read_file(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::Usage(format!("{} does not exist", path.display())),
        _ => Error::io(path, e),
    })
}

fn train(args: TrainArgs, out: &mut dyn Write) -> Result<()> {
    let mut config = AgentConfig {
        regularizer: args.regularizer,
        drift: args.drift,
        alpha_schedule: TemperatureSchedule::from_mode(args.alpha_schedule, args.alpha),
        lambda_schedule: TemperatureSchedule::from_mode(args.lambda_schedule, args.lambda),
        use_regularized_q: !args.apmd,
        ..AgentConfig::default()
    };
    if let Some(steps) = args.steps {
        config.total_env_steps = steps;
    }
    config.validate().map_err(as_usage)?;
    let dir = args.out.unwrap_or_else(|| {
        default_out(&format!(
            "train-{}-{}-s{}",
            args.env.id().replace('/', "_"),
            super::spec::config_id(args.alpha, args.lambda),
            args.seed
        ))
    });
    let start = std::time::Instant::now();
    let run = train_and_evaluate(&config, &args.env, args.seed, args.episodes)?;
    let wall_seconds = start.elapsed().as_secs_f64();
    let bounds = args.env.bounds();
    let n = run.eval_returns.len().max(1) as f64;
    let mut norm = 0.0;
    for &r in &run.eval_returns {
        norm += normalize_return(r, bounds)?;
    }
    let record = TrainRecord {
        code_version: code_version(),
        env_id: args.env.id(),
        env: args.env,
        seed: args.seed,
        config,
        mean_return: run.eval_returns.iter().sum::<f64>() / n,
        mean_norm_return: norm / n,
        eval_returns: run.eval_returns,
        wall_seconds,
    };
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let text = serde_json::to_string_pretty(&record).map_err(|e| Error::json("train record", e))?;
    write_file(&dir.join(RECORD_FILE), &text)?;
    let ckpt = serde_json::to_string(&run.policy.net.to_checkpoint())
        .map_err(|e| Error::json("checkpoint", e))?;
    write_file(&dir.join(CHECKPOINT_FILE), &ckpt)?;
    write_ndjson::<IterationLog>(&dir.join(TRAIN_LOG_FILE), &run.logs)?;
    writeln!(
        out,
        "{}: mean return {:.3}, normalized {:.4} over {} episodes -> {}",
        record.env_id,
        record.mean_return,
        record.mean_norm_return,
        record.eval_returns.len(),
        dir.display()
    )
    .map_err(|e| Error::io("<stdout>", e))
}

fn as_usage(e: Error) -> Error {
    match e {
        Error::Config(m) => Error::Usage(m),
        other => other,
    }
}

/// Reads a sweep spec file, applying an optional preset.
pub fn load_spec(path: &Path, preset: Option<Preset>) -> Result<SweepSpec> {
    let mut spec = SweepSpec::from_json(&read_file(path)?)?;
    if let Some(p) = preset {
        spec.apply_preset(p);
    }
    spec.validate().map_err(as_usage)?;
    Ok(spec)
}

fn sweep(args: SweepArgs, out: &mut dyn Write) -> Result<()> {
    let spec = load_spec(&args.spec, args.preset)?;
    let dir = args.out.unwrap_or_else(|| default_out(&spec.sweep_id));
    let summary = run_sweep(
        &spec,
        &dir,
        SweepOptions {
            parallelism: args.parallelism,
            resume: args.resume,
        },
    )?;
    writeln!(
        out,
        "sweep '{}': {} scheduled, {} already done, {} executed, {} failed -> {}",
        spec.sweep_id,
        summary.scheduled,
        summary.skipped,
        summary.executed,
        summary.failed,
        dir.display()
    )
    .map_err(|e| Error::io("<stdout>", e))?;
    if summary.failed > 0 {
        return Err(Error::IncompleteData(format!(
            "{} run(s) failed; see the manifest in {}",
            summary.failed,
            dir.display()
        )));
    }
    Ok(())
}

/// Builds the CSV text of one report kind.
pub fn build_report(
    kind: ReportKind,
    stores: &[SweepResults],
    axis: TemperatureAxis,
    threshold: f64,
) -> Result<String> {
    match kind {
        ReportKind::Heatmap => {
            if stores.len() != 1 {
                return Err(Error::Usage("heatmap takes exactly one --store".into()));
            }
            emit_heatmap(&stores[0])
        }
        ReportKind::Robustness => emit_robustness(stores),
        ReportKind::Frequency => emit_frequency(stores),
        ReportKind::Quantiles => emit_quantiles(stores),
        ReportKind::MinTemp => Ok(emit_min_temp(&min_temp_points(stores, threshold)?, axis)),
    }
}

fn report(args: ReportArgs, out: &mut dyn Write) -> Result<()> {
    let stores = args
        .store
        .iter()
        .map(|d| SweepResults::load(d))
        .collect::<Result<Vec<_>>>()?;
    let axis = match args.axis {
        AxisArg::Alpha => TemperatureAxis::Alpha,
        AxisArg::Lambda => TemperatureAxis::Lambda,
    };
    let threshold = match (args.threshold, args.loose) {
        (Some(t), _) => t,
        (None, true) => LOOSE_SUCCESS_THRESHOLD,
        (None, false) => DEFAULT_SUCCESS_THRESHOLD,
    };
    let csv = build_report(args.kind, &stores, axis, threshold)?;
    match args.out {
        Some(path) => write_file(&path, &csv),
        None => out
            .write_all(csv.as_bytes())
            .map_err(|e| Error::io("<stdout>", e)),
    }
}

/// Loads a policy saved by `pmdlab train`.
pub fn load_policy(path: &Path) -> Result<PolicyHead> {
    let ckpt: Checkpoint = serde_json::from_str(&read_file(path)?)
        .map_err(|e| Error::Usage(format!("malformed checkpoint {}: {e}", path.display())))?;
    Ok(PolicyHead {
        net: Mlp::from_checkpoint(&ckpt)?,
    })
}

fn eval(args: EvalArgs, out: &mut dyn Write) -> Result<()> {
    let policy = load_policy(&args.checkpoint)?;
    let returns = evaluate(&policy, &args.env, args.episodes, args.seed)?;
    let bounds = args.env.bounds();
    let mut norm = 0.0;
    for &r in &returns {
        norm += normalize_return(r, bounds)?;
    }
    let n = returns.len().max(1) as f64;
    let text = serde_json::json!({
        "env": args.env.id(),
        "episodes": returns.len(),
        "returns": returns,
        "mean_return": returns.iter().sum::<f64>() / n,
        "mean_norm_return": norm / n,
    });
    writeln!(out, "{text}").map_err(|e| Error::io("<stdout>", e))
}

fn template(args: TemplateArgs, out: &mut dyn Write) -> Result<()> {
    let mut spec = SweepSpec::full(&args.id, args.regularizer, args.drift);
    spec.apply_preset(args.preset);
    writeln!(out, "{}", spec.to_json()).map_err(|e| Error::io("<stdout>", e))
}

/// Executes a parsed command.
pub fn execute(cli: Cli, out: &mut dyn Write) -> Result<()> {
    match cli.command {
        Command::Train(a) => train(a, out),
        Command::Sweep(a) => sweep(a, out),
        Command::Report(a) => report(a, out),
        Command::Eval(a) => eval(a, out),
        Command::Template(a) => template(a, out),
    }
}

/// Exit status for an error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Usage(_) => 2,
        _ => 1,
    }
}

/// Parses `args` (including the program name) and runs the command, returning the exit status.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let rendered = e.render().to_string();
            // help and version go to stdout with status 0
            let _ = if code == 0 {
                out.write_all(rendered.as_bytes())
            } else {
                err.write_all(rendered.as_bytes())
            };
            return code;
        }
    };
    match execute(cli, out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            exit_code(&e)
        }
    }
}
