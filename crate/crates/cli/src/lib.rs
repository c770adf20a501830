//! Command-line front end: synthesis runs, policy evaluation, catch-time
//! histograms, checkpoint inspection and replay.
//!
//! Exit codes: 0 on success, 1 for usage, configuration and input errors,
//! 2 when an external generator service fails.

pub mod histogram;

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use ctrlsynth_core::environments::{write_trajectory_csv, EnvId};
use ctrlsynth_core::evaluation::{rollout, RolloutOptions, Termination};
use ctrlsynth_core::orchestrator::{
    latest_checkpoint, make_generator, replay, OrchestratorError, PolicySelector, Run, RunReport,
};
use ctrlsynth_core::policy_lang::PolicyProgram;
use ctrlsynth_core::program_db::IslandDatabase;
use ctrlsynth_core::spec_input::{load_spec, parse_override, read_config_file, RunConfig};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    External(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::External(_) => 2,
        }
    }
}

fn usage<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Usage(e.to_string())
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> CliError + '_ {
    move |e| CliError::Usage(format!("{}: {e}", path.display()))
}

impl From<OrchestratorError> for CliError {
    fn from(e: OrchestratorError) -> Self {
        match e {
            OrchestratorError::Generator { .. } => CliError::External(e.to_string()),
            other => CliError::Usage(other.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "ctrlsynth", version, about = "Evolve interpretable control-policy programs")]
pub struct Cli {
    /// Log progress to stderr (repeat for more detail).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run an evolutionary search from a spec file.
    Synthesize(SynthesizeArgs),
    /// Score one policy file on an environment.
    Evaluate(EvaluateArgs),
    /// Catch-time histogram of a ball-in-cup policy.
    Histogram(HistogramArgs),
    /// Inspect a checkpoint.
    Db {
        #[command(subcommand)]
        command: DbCommand,
    },
    /// Re-run a checkpointed program with trajectory recording.
    Replay(ReplayArgs),
}

#[derive(Debug, Args)]
pub struct SynthesizeArgs {
    #[arg(long)]
    pub spec: PathBuf,
    /// Run configuration file (`key = value` lines).
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_parser = ["mock", "remote"])]
    pub generator: Option<String>,
    #[arg(long)]
    pub max_candidates: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory; defaults to `runs/<spec name>`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Continue from a checkpoint file, or the latest one in a directory.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    /// Configuration override, `key=value`; may be repeated.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub env: String,
    #[arg(long)]
    pub policy: PathBuf,
    #[arg(long, default_value_t = 1000)]
    pub horizon: usize,
    /// Seeded initial condition; the default start is used without it.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Write the trajectory as CSV.
    #[arg(long)]
    pub dump: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct HistogramArgs {
    #[arg(long)]
    pub policy: PathBuf,
    #[arg(long, default_value_t = 10_000)]
    pub episodes: u64,
    #[arg(long, default_value_t = histogram::DEFAULT_CAP_S)]
    pub cap_seconds: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Directory for `histogram.csv` and `summary.json`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum DbCommand {
    /// Print the k best programs.
    Top {
        /// Checkpoint file, or a run directory holding checkpoints.
        checkpoint: PathBuf,
        #[arg(default_value_t = 5)]
        k: usize,
    },
    /// Print per-island statistics.
    Inspect { checkpoint: PathBuf },
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    /// Checkpoint file, or a run directory holding checkpoints.
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// `best` or a candidate id.
    #[arg(long, default_value = "best")]
    pub policy: PolicySelector,
    #[arg(long)]
    pub dump: Option<PathBuf>,
}

fn resolve_checkpoint(path: &Path) -> Result<PathBuf, CliError> {
    if path.is_dir() {
        latest_checkpoint(path).ok_or_else(|| CliError::Usage(format!("no checkpoints in {}", path.display())))
    } else if path.exists() {
        Ok(path.to_path_buf())
    } else {
        Err(CliError::Usage(format!("checkpoint {} does not exist", path.display())))
    }
}

fn write_file(path: &Path, contents: &[u8]) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    fs::write(path, contents).map_err(io_err(path))
}

/// Layers: defaults, the spec's `[run]`, the config file, then flags.
fn synth_config(args: &SynthesizeArgs, spec_run: &[(String, String)]) -> Result<RunConfig, CliError> {
    let file = match &args.config {
        Some(p) => read_config_file(p).map_err(usage)?,
        None => Vec::new(),
    };
    let mut flags = Vec::new();
    if let Some(g) = &args.generator {
        flags.push(("generator".to_string(), g.clone()));
    }
    if let Some(m) = args.max_candidates {
        flags.push(("max_candidates".to_string(), m.to_string()));
    }
    if let Some(s) = args.seed {
        flags.push(("seed".to_string(), s.to_string()));
    }
    for o in &args.overrides {
        flags.push(parse_override(o).map_err(usage)?);
    }
    RunConfig::layered([spec_run, file.as_slice(), flags.as_slice()]).map_err(usage)
}

pub fn synthesize(args: &SynthesizeArgs, out: &mut dyn Write) -> Result<RunReport, CliError> {
    let spec = load_spec(&args.spec).map_err(|e| CliError::Usage(format!("{}: {e}", args.spec.display())))?;
    let cfg = synth_config(args, &spec.run)?;
    let out_dir = args.out.clone().unwrap_or_else(|| {
        let stem = args.spec.file_stem().and_then(|s| s.to_str()).unwrap_or("run");
        PathBuf::from("runs").join(stem)
    });
    let generator = make_generator(&cfg).map_err(usage)?;
    let mut run = match &args.resume {
        Some(p) => Run::resume(&resolve_checkpoint(p)?, spec, cfg, generator, Some(out_dir.clone()))?,
        None => Run::new(spec, cfg, generator, Some(out_dir.clone()))?,
    };
    let report = run.run_to_completion()?;
    let text = report.render_text();
    write_file(&out_dir.join("report.txt"), text.as_bytes())?;
    let json = serde_json::to_string_pretty(&report.to_json()).expect("report serializes");
    write_file(&out_dir.join("report.json"), json.as_bytes())?;
    write_file(&out_dir.join("best_policy.py"), report.best.canonical().as_bytes())?;
    let _ = write!(out, "{text}");
    let _ = writeln!(out, "outputs written to {}", out_dir.display());
    Ok(report)
}

fn read_policy(path: &Path, env: EnvId) -> Result<PolicyProgram, CliError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    PolicyProgram::parse(&text, env.obs_dim(), env.action_dim())
        .map_err(|e| CliError::Usage(format!("{}:{e}", path.display())))
}

pub fn evaluate(args: &EvaluateArgs, out: &mut dyn Write) -> Result<f64, CliError> {
    let env: EnvId = args.env.parse().map_err(usage)?;
    let program = read_policy(&args.policy, env)?;
    let opts = RolloutOptions {
        seed: args.seed,
        record: args.dump.is_some(),
        ..RolloutOptions::new(args.horizon)
    };
    let result = rollout(&program, env, &opts);
    if let (Some(path), Some(traj)) = (&args.dump, &result.trajectory) {
        let mut buf = Vec::new();
        write_trajectory_csv(&mut buf, env, traj).map_err(io_err(path))?;
        write_file(path, &buf)?;
    }
    if let Termination::Rejected(r) = &result.termination {
        return Err(CliError::Usage(format!("policy rejected: {r}")));
    }
    let _ = writeln!(out, "{:?}", result.return_r);
    Ok(result.return_r)
}

pub fn run_histogram(args: &HistogramArgs, out: &mut dyn Write) -> Result<histogram::Histogram, CliError> {
    if !(args.cap_seconds > 0.0 && args.cap_seconds.is_finite()) {
        return Err(CliError::Usage("--cap-seconds must be positive".into()));
    }
    let program = read_policy(&args.policy, EnvId::BallInCup)?;
    let h = histogram::catch_histogram(&program, args.episodes, args.cap_seconds, args.seed);
    let mut csv = Vec::new();
    h.write_csv(&mut csv).expect("in-memory write");
    write_file(&args.out.join("histogram.csv"), &csv)?;
    let summary = serde_json::to_string(&h.summary).expect("summary serializes");
    write_file(&args.out.join("summary.json"), format!("{summary}\n").as_bytes())?;
    let _ = writeln!(out, "{summary}");
    Ok(h)
}

pub fn db(cmd: &DbCommand, out: &mut dyn Write) -> Result<(), CliError> {
    match cmd {
        DbCommand::Top { checkpoint, k } => {
            let db = IslandDatabase::restore(&resolve_checkpoint(checkpoint)?).map_err(usage)?;
            for (rank, p) in db.top(*k).into_iter().enumerate() {
                let _ = writeln!(
                    out,
                    "#{} score {:?} id {} island {} generator {}",
                    rank + 1,
                    p.score,
                    p.iteration,
                    p.island,
                    p.generator_id
                );
                let _ = writeln!(out, "{}", p.canonical());
            }
        }
        DbCommand::Inspect { checkpoint } => {
            let db = IslandDatabase::restore(&resolve_checkpoint(checkpoint)?).map_err(usage)?;
            let _ = writeln!(
                out,
                "islands {} capacity {} registrations {}",
                db.islands().len(),
                db.config.capacity,
                db.registrations()
            );
            let _ = writeln!(out, "island  members  best                  worst");
            for island in db.islands() {
                let worst = island.members.last().map_or(f64::NEG_INFINITY, |m| m.score);
                let _ = writeln!(
                    out,
                    "{:>6}  {:>7}  {:<20?}  {:?}",
                    island.id,
                    island.len(),
                    island.best_score(),
                    worst
                );
            }
        }
    }
    Ok(())
}

pub fn run_replay(args: &ReplayArgs, out: &mut dyn Write) -> Result<f64, CliError> {
    let path = resolve_checkpoint(&args.checkpoint)?;
    let r = replay(&path, args.policy)?;
    if let (Some(dump), Some(traj)) = (&args.dump, &r.rollout.trajectory) {
        let mut buf = Vec::new();
        write_trajectory_csv(&mut buf, r.program.env_id, traj).map_err(io_err(dump))?;
        write_file(dump, &buf)?;
    }
    let _ = writeln!(
        out,
        "id {} stored score {:?} replayed score {:?}",
        r.program.iteration, r.program.score, r.score
    );
    Ok(r.score)
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let filter = tracing_subscriber::EnvFilter::try_from_default_env()
        .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new(level));
    let _ = tracing_subscriber::fmt()
        .with_env_filter(filter)
        .with_writer(std::io::stderr)
        .try_init();
}

pub fn execute(cli: &Cli, out: &mut dyn Write) -> Result<(), CliError> {
    match &cli.command {
        Command::Synthesize(a) => synthesize(a, out).map(drop),
        Command::Evaluate(a) => evaluate(a, out).map(drop),
        Command::Histogram(a) => run_histogram(a, out).map(drop),
        Command::Db { command } => db(command, out),
        Command::Replay(a) => run_replay(a, out).map(drop),
    }
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn main_with<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = if code == 0 { write!(out, "{e}") } else { write!(err, "{e}") };
            return code;
        }
    };
    init_logging(cli.verbose);
    match execute(&cli, out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}
