//! The evolutionary loop: sample parents, prompt, generate, evaluate,
//! register, and periodically reset islands and checkpoint.
//!
//! Every random stream derives from the run seed through
//! [`split_seed`](crate::seed::split_seed): `"db"` for parent sampling and
//! resets, `"generator"` for the mock generator and `"env"` for episode
//! starts. Evaluation results are collected in candidate order, so a run is
//! bit-reproducible for any worker count as long as the generator is.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tracing::{info, warn};

use crate::environments::EnvId;
use crate::evaluation::{
    evaluate_candidate, rollout, score_program, EvalSettings, Rejection, RejectionCategory, RolloutOptions,
    RolloutResult, ScoredProgram,
};
use crate::generation::{
    build_prompt, Backoff, GenerationError, GenerationRequest, Generator, GeneratorParams, MockGenerator,
    RemoteGenerator,
};
use crate::policy_lang::{ParseError, SandboxLimits};
use crate::program_db::{DbConfig, DbError, IslandDatabase};
use crate::seed::{fnv1a, split_seed};
use crate::spec_input::{ConfigError, GeneratorKind, RunConfig, TaskSpec};

#[derive(Debug, Error)]
pub enum OrchestratorError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("starter policy does not parse: {0}")]
    StarterParse(ParseError),
    #[error("starter policy fails evaluation: {0}")]
    StarterRejected(Rejection),
    #[error("{source}{}", .checkpoint.as_ref().map(|p| format!("; last checkpoint {}", p.display())).unwrap_or_default())]
    Generator {
        source: GenerationError,
        checkpoint: Option<PathBuf>,
    },
    #[error(transparent)]
    Db(#[from] DbError),
    #[error("{path}: {msg}")]
    Io { path: PathBuf, msg: String },
    #[error("cannot resume: {0}")]
    Resume(String),
    #[error("no program with id {0} in checkpoint")]
    NotFound(u64),
}

/// Why the loop ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Budget,
    TargetReached,
}

/// A scored program in serializable form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProgramRecord {
    pub source: String,
    pub score: f64,
    pub env_id: EnvId,
    pub iteration: u64,
    pub generator_id: String,
    pub island: usize,
}

impl ProgramRecord {
    pub fn from_scored(sp: &ScoredProgram) -> Self {
        ProgramRecord {
            source: sp.canonical(),
            score: sp.score,
            env_id: sp.env_id,
            iteration: sp.iteration,
            generator_id: sp.generator_id.clone(),
            island: sp.island,
        }
    }

    pub fn to_scored(&self, spec: &TaskSpec) -> Result<ScoredProgram, ParseError> {
        let program = crate::policy_lang::PolicyProgram::parse(
            &self.source,
            self.env_id.obs_dim(),
            self.env_id.action_dim(),
        )
        .or_else(|_| spec.parse_policy(&self.source))?;
        Ok(ScoredProgram {
            program,
            score: self.score,
            env_id: self.env_id,
            iteration: self.iteration,
            generator_id: self.generator_id.clone(),
            island: self.island,
        })
    }
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub candidates_generated: u64,
    pub candidates_valid: u64,
    /// Count per category; every category is present.
    pub rejections: BTreeMap<RejectionCategory, u64>,
    pub best: ScoredProgram,
    /// `(candidate index, score)` at each strict improvement, starting with
    /// the starter at index 0.
    pub best_score_trace: Vec<(u64, f64)>,
    pub registrations: u64,
    pub island_resets: u64,
    pub stop: StopReason,
    pub wall_time: Duration,
}

/// Equality over everything the search determines; wall time is excluded.
impl PartialEq for RunReport {
    fn eq(&self, other: &Self) -> bool {
        self.candidates_generated == other.candidates_generated
            && self.candidates_valid == other.candidates_valid
            && self.rejections == other.rejections
            && self.best == other.best
            && self.best_score_trace.len() == other.best_score_trace.len()
            && self
                .best_score_trace
                .iter()
                .zip(&other.best_score_trace)
                .all(|(a, b)| a.0 == b.0 && a.1.to_bits() == b.1.to_bits())
            && self.registrations == other.registrations
            && self.island_resets == other.island_resets
            && self.stop == other.stop
    }
}

impl RunReport {
    pub fn rejected(&self) -> u64 {
        self.rejections.values().sum()
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "candidates_generated": self.candidates_generated,
            "candidates_valid": self.candidates_valid,
            "rejections": self.rejections.iter().map(|(k, v)| (k.name(), *v)).collect::<BTreeMap<_, _>>(),
            "best": ProgramRecord::from_scored(&self.best),
            "best_score_trace": self.best_score_trace,
            "registrations": self.registrations,
            "island_resets": self.island_resets,
            "stop": self.stop,
            "wall_time_s": self.wall_time.as_secs_f64(),
        })
    }

    pub fn render_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "candidates generated: {}", self.candidates_generated);
        let _ = writeln!(s, "candidates valid:     {}", self.candidates_valid);
        for (k, v) in &self.rejections {
            let _ = writeln!(s, "rejected {:<16} {v}", format!("{}:", k.name()));
        }
        let _ = writeln!(s, "registrations:        {}", self.registrations);
        let _ = writeln!(s, "island resets:        {}", self.island_resets);
        let _ = writeln!(
            s,
            "best score:           {:?} (candidate {}, island {})",
            self.best.score, self.best.iteration, self.best.island
        );
        let _ = writeln!(s, "stopped by:           {}", match self.stop {
            StopReason::Budget => "candidate budget",
            StopReason::TargetReached => "target score",
        });
        let _ = writeln!(s, "wall time:            {:.2} s", self.wall_time.as_secs_f64());
        s.push_str("best score trace:\n");
        for (i, score) in &self.best_score_trace {
            let _ = writeln!(s, "  {i:>8}  {score:?}");
        }
        s.push_str("best policy:\n");
        s.push_str(&self.best.canonical());
        s
    }
}

/// Loop counters persisted with each checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct LoopState {
    generated: u64,
    valid: u64,
    rejections: BTreeMap<RejectionCategory, u64>,
    batches: u64,
    island_resets: u64,
    trace: Vec<(u64, f64)>,
    best: ProgramRecord,
    prior_wall_time_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct SpecRecord {
    env_id: EnvId,
    horizon: usize,
    starter: String,
    fingerprint: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct EvalRecord {
    episodes: usize,
    seed: Option<u64>,
    limits: SandboxLimits,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CheckpointExtra {
    config_hash: u64,
    spec: SpecRecord,
    eval: EvalRecord,
    state: LoopState,
}

fn spec_fingerprint(spec: &TaskSpec) -> u64 {
    fnv1a(format!("{}|{}|{}", spec.env_id.name(), spec.horizon, spec.starter_policy_source).as_bytes())
}

/// Evaluation settings a run derives from its configuration.
pub fn eval_settings(cfg: &RunConfig) -> EvalSettings {
    EvalSettings {
        limits: SandboxLimits::default(),
        episodes: cfg.eval_episodes,
        seed: (cfg.eval_episodes > 1).then(|| split_seed(cfg.seed, "env")),
    }
}

pub fn checkpoint_path(out: &Path, candidates: u64) -> PathBuf {
    out.join(format!("ckpt-{candidates}.db"))
}

/// The generator selected by the configuration.
pub fn make_generator(cfg: &RunConfig) -> Result<Box<dyn Generator + Send>, GenerationError> {
    match cfg.generator {
        GeneratorKind::Mock => Ok(Box::new(MockGenerator::new(cfg.seed))),
        GeneratorKind::Remote => Ok(Box::new(RemoteGenerator::new(
            GeneratorParams::from_config(cfg),
            Backoff {
                initial: Duration::from_millis(cfg.retry_backoff_ms),
                ..Backoff::default()
            },
            cfg.max_connections,
        )?)),
    }
}

pub struct Run {
    spec: TaskSpec,
    cfg: RunConfig,
    settings: EvalSettings,
    starter: ScoredProgram,
    best: ScoredProgram,
    db: IslandDatabase,
    generator: Box<dyn Generator + Send>,
    state: LoopState,
    out: Option<PathBuf>,
    pool: Option<rayon::ThreadPool>,
    started: Instant,
}

impl Run {
    /// A fresh run. The starter is scored and placed in every island.
    pub fn new(
        spec: TaskSpec,
        cfg: RunConfig,
        generator: Box<dyn Generator + Send>,
        out: Option<PathBuf>,
    ) -> Result<Run, OrchestratorError> {
        cfg.validate()?;
        let settings = eval_settings(&cfg);
        let program = spec.starter().map_err(OrchestratorError::StarterParse)?;
        let score = score_program(&program, &spec, &settings).map_err(OrchestratorError::StarterRejected)?;
        let starter = ScoredProgram {
            program,
            score,
            env_id: spec.env_id,
            iteration: 0,
            generator_id: "starter".into(),
            island: 0,
        };
        let mut db = IslandDatabase::new(db_config(&cfg), split_seed(cfg.seed, "db"));
        db.seed_all(&starter)?;
        let state = LoopState {
            generated: 0,
            valid: 0,
            rejections: RejectionCategory::ALL.into_iter().map(|c| (c, 0)).collect(),
            batches: 0,
            island_resets: 0,
            trace: vec![(0, score)],
            best: ProgramRecord::from_scored(&starter),
            prior_wall_time_s: 0.0,
        };
        Ok(Run {
            pool: make_pool(cfg.workers),
            spec,
            settings,
            best: starter.clone(),
            starter,
            db,
            generator,
            state,
            out,
            cfg,
            started: Instant::now(),
        })
    }

    /// Continues from a checkpoint. The search-relevant configuration must
    /// match the checkpointed run; the candidate budget may differ.
    pub fn resume(
        checkpoint: &Path,
        spec: TaskSpec,
        cfg: RunConfig,
        generator: Box<dyn Generator + Send>,
        out: Option<PathBuf>,
    ) -> Result<Run, OrchestratorError> {
        cfg.validate()?;
        let (db, extra) = IslandDatabase::restore_with(checkpoint)?;
        let extra: CheckpointExtra = serde_json::from_value(extra)
            .map_err(|e| OrchestratorError::Resume(format!("checkpoint carries no run state: {e}")))?;
        if extra.config_hash != cfg.hash() {
            return Err(OrchestratorError::Resume(
                "run configuration differs from the checkpointed run".into(),
            ));
        }
        if extra.spec.fingerprint != spec_fingerprint(&spec) {
            return Err(OrchestratorError::Resume("task spec differs from the checkpointed run".into()));
        }
        let settings = eval_settings(&cfg);
        let program = spec.starter().map_err(OrchestratorError::StarterParse)?;
        let score = score_program(&program, &spec, &settings).map_err(OrchestratorError::StarterRejected)?;
        let starter = ScoredProgram {
            program,
            score,
            env_id: spec.env_id,
            iteration: 0,
            generator_id: "starter".into(),
            island: 0,
        };
        let best = extra
            .state
            .best
            .to_scored(&spec)
            .map_err(|e| OrchestratorError::Resume(format!("stored best does not parse: {e}")))?;
        Ok(Run {
            pool: make_pool(cfg.workers),
            spec,
            settings,
            starter,
            best,
            db,
            generator,
            state: extra.state,
            out,
            cfg,
            started: Instant::now(),
        })
    }

    pub fn db(&self) -> &IslandDatabase {
        &self.db
    }

    pub fn best(&self) -> &ScoredProgram {
        &self.best
    }

    pub fn generated(&self) -> u64 {
        self.state.generated
    }

    fn target_reached(&self) -> bool {
        self.cfg.target_score.is_some_and(|t| self.best.score >= t)
    }

    fn finished(&self) -> bool {
        self.state.generated >= self.cfg.max_candidates as u64 || self.target_reached()
    }

    fn evaluate_all(&self, sources: &[String]) -> Vec<Result<ScoredProgram, Rejection>> {
        let (spec, settings) = (&self.spec, &self.settings);
        let eval = |src: &String| evaluate_candidate(src, spec, settings);
        match &self.pool {
            Some(pool) => pool.install(|| sources.par_iter().map(eval).collect()),
            None => sources.iter().map(eval).collect(),
        }
    }

    /// Runs one prompt-generate-evaluate-register cycle.
    pub fn step(&mut self) -> Result<(), OrchestratorError> {
        let parents = self.db.sample_prompt_programs(&self.starter.program);
        let prompt = build_prompt(&parents.low, &parents.high, &self.spec, parents.lineage);
        let request = GenerationRequest {
            prompt: &prompt,
            low: &parents.low,
            high: &parents.high,
            n: self.cfg.candidates_per_prompt,
            batch_index: self.state.batches,
        };
        let batch = match self.generator.generate(&request) {
            Ok(b) => b,
            Err(source) => {
                let checkpoint = match &self.out {
                    Some(_) => Some(self.write_checkpoint()?),
                    None => None,
                };
                return Err(OrchestratorError::Generator { source, checkpoint });
            }
        };
        self.state.batches += 1;
        let before = self.state.generated;
        let results = self.evaluate_all(&batch.sources);
        for result in results {
            self.state.generated += 1;
            match result {
                Ok(mut sp) => {
                    sp.iteration = self.state.generated;
                    sp.generator_id = batch.generator_id.clone();
                    sp.island = parents.island;
                    self.state.valid += 1;
                    if sp.score > self.best.score {
                        self.best = sp.clone();
                        self.state.best = ProgramRecord::from_scored(&sp);
                        self.state.trace.push((sp.iteration, sp.score));
                    }
                    let island = sp.island;
                    if self.db.register(sp, island)?.inserted() && self.db.reset_due() {
                        let report = self.db.reset_islands();
                        self.state.island_resets += 1;
                        info!(reset = ?report.reset, from = ?report.sources, "islands reset");
                    }
                }
                Err(rejection) => {
                    *self.state.rejections.entry(rejection.category).or_insert(0) += 1;
                }
            }
        }
        if batch.failures > 0 {
            self.state.generated += batch.failures as u64;
            *self.state.rejections.entry(RejectionCategory::ParseError).or_insert(0) += batch.failures as u64;
        }
        let every = self.cfg.checkpoint_every as u64;
        if self.out.is_some() && every > 0 && self.state.generated / every > before / every {
            let path = self.write_checkpoint()?;
            info!(generated = self.state.generated, best = self.best.score, path = %path.display(), "checkpoint");
        }
        Ok(())
    }

    /// Runs until the candidate budget or the target score is reached and
    /// writes a final checkpoint when an output directory is set.
    pub fn run_to_completion(&mut self) -> Result<RunReport, OrchestratorError> {
        while !self.finished() {
            self.step()?;
        }
        if let Some(out) = &self.out {
            if !checkpoint_path(out, self.state.generated).exists() {
                self.write_checkpoint()?;
            }
        }
        Ok(self.report())
    }

    pub fn report(&self) -> RunReport {
        RunReport {
            candidates_generated: self.state.generated,
            candidates_valid: self.state.valid,
            rejections: self.state.rejections.clone(),
            best: self.best.clone(),
            best_score_trace: self.state.trace.clone(),
            registrations: self.db.registrations(),
            island_resets: self.state.island_resets,
            stop: if self.target_reached() {
                StopReason::TargetReached
            } else {
                StopReason::Budget
            },
            wall_time: Duration::from_secs_f64(self.state.prior_wall_time_s) + self.started.elapsed(),
        }
    }

    /// Writes `<out>/ckpt-<generated>.db` and returns its path.
    pub fn write_checkpoint(&self) -> Result<PathBuf, OrchestratorError> {
        let out = self
            .out
            .as_ref()
            .ok_or_else(|| OrchestratorError::Io {
                path: PathBuf::new(),
                msg: "no output directory for checkpoints".into(),
            })?;
        let mut state = self.state.clone();
        state.prior_wall_time_s += self.started.elapsed().as_secs_f64();
        let extra = CheckpointExtra {
            config_hash: self.cfg.hash(),
            spec: SpecRecord {
                env_id: self.spec.env_id,
                horizon: self.spec.horizon,
                starter: self.spec.starter_policy_source.clone(),
                fingerprint: spec_fingerprint(&self.spec),
            },
            eval: EvalRecord {
                episodes: self.settings.episodes,
                seed: self.settings.seed,
                limits: self.settings.limits,
            },
            state,
        };
        let path = checkpoint_path(out, self.state.generated);
        let value = serde_json::to_value(&extra).expect("checkpoint state serializes");
        self.db.checkpoint_with(&path, &value)?;
        Ok(path)
    }
}

fn db_config(cfg: &RunConfig) -> DbConfig {
    DbConfig {
        islands: cfg.islands,
        capacity: cfg.db_capacity_per_island,
        tau_db: cfg.tau_db,
        reset_period: cfg.reset_period,
    }
}

fn make_pool(workers: usize) -> Option<rayon::ThreadPool> {
    if workers <= 1 {
        return None;
    }
    match rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
        Ok(pool) => Some(pool),
        Err(e) => {
            warn!(error = %e, "falling back to sequential evaluation");
            None
        }
    }
}

/// Runs a search with the configured generator and no output directory.
pub fn run(spec: &TaskSpec, cfg: &RunConfig) -> Result<RunReport, OrchestratorError> {
    let generator = make_generator(cfg).map_err(|source| OrchestratorError::Generator {
        source,
        checkpoint: None,
    })?;
    Run::new(spec.clone(), cfg.clone(), generator, None)?.run_to_completion()
}

/// The checkpoint with the largest candidate count in `out`, if any.
pub fn latest_checkpoint(out: &Path) -> Option<PathBuf> {
    std::fs::read_dir(out)
        .ok()?
        .filter_map(|e| e.ok())
        .filter_map(|e| {
            let name = e.file_name().into_string().ok()?;
            let n: u64 = name.strip_prefix("ckpt-")?.strip_suffix(".db")?.parse().ok()?;
            Some((n, e.path()))
        })
        .max_by_key(|(n, _)| *n)
        .map(|(_, p)| p)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PolicySelector {
    Best,
    /// A program by candidate index; 0 is the starter.
    Id(u64),
}

impl FromStr for PolicySelector {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "best" => Ok(PolicySelector::Best),
            _ => s
                .parse()
                .map(PolicySelector::Id)
                .map_err(|_| format!("expected `best` or a candidate id, got `{s}`")),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Replay {
    pub program: ScoredProgram,
    pub horizon: usize,
    /// Score recomputed under the run's evaluation settings.
    pub score: f64,
    /// First episode with its trajectory recorded.
    pub rollout: RolloutResult,
}

/// Re-evaluates a checkpointed program with trajectory recording on.
pub fn replay(checkpoint: &Path, selector: PolicySelector) -> Result<Replay, OrchestratorError> {
    let (db, extra) = IslandDatabase::restore_with(checkpoint)?;
    let extra: CheckpointExtra = serde_json::from_value(extra)
        .map_err(|e| OrchestratorError::Resume(format!("checkpoint carries no run state: {e}")))?;
    let mut spec = TaskSpec::new(extra.spec.env_id, extra.spec.horizon);
    spec.starter_policy_source = extra.spec.starter.clone();
    let stored_best = extra
        .state
        .best
        .to_scored(&spec)
        .map_err(|e| OrchestratorError::Resume(format!("stored best does not parse: {e}")))?;
    let program = match selector {
        PolicySelector::Best => stored_best,
        PolicySelector::Id(id) if id == stored_best.iteration => stored_best,
        PolicySelector::Id(id) => db.find_iteration(id).cloned().ok_or(OrchestratorError::NotFound(id))?,
    };
    let settings = EvalSettings {
        limits: extra.eval.limits,
        episodes: extra.eval.episodes,
        seed: extra.eval.seed,
    };
    let score = score_program(&program.program, &spec, &settings).unwrap_or(f64::NAN);
    let opts = RolloutOptions {
        horizon: spec.horizon,
        seed: match settings.episodes {
            1 if settings.seed.is_none() => None,
            _ => Some(crate::seed::split_index(settings.seed.unwrap_or(0), 0)),
        },
        record: true,
        stop_when_done: false,
        limits: settings.limits,
    };
    let rollout = rollout(&program.program, spec.env_id, &opts);
    Ok(Replay {
        program,
        horizon: spec.horizon,
        score,
        rollout,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(max: usize) -> RunConfig {
        RunConfig {
            max_candidates: max,
            seed: 7,
            ..RunConfig::default()
        }
    }

    #[test]
    fn empty_budget_reports_starter() {
        let spec = TaskSpec::new(EnvId::PendulumSwingup, 200);
        let report = run(&spec, &cfg(0)).unwrap();
        assert_eq!(report.candidates_generated, 0);
        assert_eq!(report.best.score, 0.0);
        assert_eq!(report.best.iteration, 0);
        assert_eq!(report.best_score_trace, vec![(0, 0.0)]);
    }

    #[test]
    fn accounting_and_trace() {
        let spec = TaskSpec::new(EnvId::PendulumSwingup, 200);
        let r = run(&spec, &cfg(60)).unwrap();
        assert_eq!(r.candidates_generated, 60);
        assert_eq!(r.candidates_generated, r.candidates_valid + r.rejected());
        assert!(r.best_score_trace.windows(2).all(|w| w[0].1 < w[1].1 && w[0].0 < w[1].0));
        assert_eq!(r.best_score_trace.last().unwrap().1, r.best.score);
        let rescored = score_program(&r.best.program, &spec, &EvalSettings::default()).unwrap();
        assert_eq!(rescored.to_bits(), r.best.score.to_bits());
    }

    #[test]
    fn target_stops_early() {
        let spec = TaskSpec::new(EnvId::PendulumSwingup, 200);
        let mut c = cfg(400);
        c.target_score = Some(-1e300);
        let r = run(&spec, &c).unwrap();
        assert_eq!(r.stop, StopReason::TargetReached);
        assert_eq!(r.candidates_generated, 0);
    }

    #[test]
    fn selector_parsing() {
        assert_eq!("best".parse::<PolicySelector>(), Ok(PolicySelector::Best));
        assert_eq!("12".parse::<PolicySelector>(), Ok(PolicySelector::Id(12)));
        assert!("x".parse::<PolicySelector>().is_err());
    }

    #[test]
    fn parallel_matches_sequential() {
        let spec = TaskSpec::new(EnvId::PendulumSwingup, 200);
        let a = run(&spec, &cfg(40)).unwrap();
        let mut c = cfg(40);
        c.workers = 3;
        let b = run(&spec, &c).unwrap();
        assert_eq!(a, b);
    }
}
