//! Closed-loop rollouts and candidate scoring.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::environments::{BallInCup, EnvError, EnvId, Environment, Pendulum, StepRecord};
use crate::policy_lang::{EvalError, PolicyProgram, SandboxLimits};
use crate::seed::split_index;
use crate::spec_input::TaskSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectionCategory {
    ParseError,
    RuntimeError,
    Nonfinite,
    BudgetExceeded,
}

impl RejectionCategory {
    pub const ALL: [RejectionCategory; 4] = [
        RejectionCategory::ParseError,
        RejectionCategory::RuntimeError,
        RejectionCategory::Nonfinite,
        RejectionCategory::BudgetExceeded,
    ];

    pub fn name(self) -> &'static str {
        match self {
            RejectionCategory::ParseError => "parse_error",
            RejectionCategory::RuntimeError => "runtime_error",
            RejectionCategory::Nonfinite => "nonfinite",
            RejectionCategory::BudgetExceeded => "budget_exceeded",
        }
    }
}

impl fmt::Display for RejectionCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl From<&EvalError> for RejectionCategory {
    fn from(e: &EvalError) -> Self {
        match e {
            EvalError::BudgetExceeded(_) => RejectionCategory::BudgetExceeded,
            EvalError::NonFinite(_) | EvalError::ObservationNonFinite => RejectionCategory::Nonfinite,
            _ => RejectionCategory::RuntimeError,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rejection {
    pub category: RejectionCategory,
    pub message: String,
    /// Step at which a rollout failed; absent for parse errors.
    pub step: Option<usize>,
}

impl fmt::Display for Rejection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.step {
            Some(t) => write!(f, "{} at step {t}: {}", self.category, self.message),
            None => write!(f, "{}: {}", self.category, self.message),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Termination {
    /// Ran the full horizon.
    Horizon,
    /// The task signalled success (ball caught) before the horizon.
    Done { step: usize },
    Rejected(Rejection),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutResult {
    /// Sum of stage rewards; NaN when the rollout is invalid.
    pub return_r: f64,
    pub steps_completed: usize,
    pub trajectory: Option<Vec<StepRecord>>,
    pub termination: Termination,
    pub valid: bool,
}

impl RolloutResult {
    pub fn rejection(&self) -> Option<&Rejection> {
        match &self.termination {
            Termination::Rejected(r) => Some(r),
            _ => None,
        }
    }

    /// Time at which the task was completed, if it was.
    pub fn done_time(&self, dt: f64) -> Option<f64> {
        match self.termination {
            Termination::Done { step } => Some((step + 1) as f64 * dt),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RolloutOptions {
    pub horizon: usize,
    /// `None` uses the environment's default deterministic start.
    pub seed: Option<u64>,
    pub record: bool,
    /// End the episode as soon as the environment reports success.
    pub stop_when_done: bool,
    pub limits: SandboxLimits,
}

impl RolloutOptions {
    pub fn new(horizon: usize) -> Self {
        RolloutOptions {
            horizon,
            seed: None,
            record: false,
            stop_when_done: false,
            limits: SandboxLimits::default(),
        }
    }
}

pub fn rollout_env<E: Environment>(env: &E, program: &PolicyProgram, opts: &RolloutOptions) -> RolloutResult {
    let mut state = env.reset(opts.seed);
    let mut total = 0.0;
    let mut trajectory = opts.record.then(Vec::new);
    let reject = |category, message: String, step, traj| RolloutResult {
        return_r: f64::NAN,
        steps_completed: step,
        trajectory: traj,
        termination: Termination::Rejected(Rejection {
            category,
            message,
            step: Some(step),
        }),
        valid: false,
    };
    for t in 0..opts.horizon {
        let obs = env.observe(&state);
        let action = match program.eval(&obs, &opts.limits) {
            Ok(a) => a,
            Err(e) => return reject(RejectionCategory::from(&e), e.to_string(), t, trajectory),
        };
        let next = match env.step(&state, &action) {
            Ok(s) => s,
            Err(e @ EnvError::NonFiniteState) => {
                return reject(RejectionCategory::Nonfinite, e.to_string(), t, trajectory)
            }
        };
        let r = env.reward(&next, &action);
        total += r;
        if let Some(traj) = trajectory.as_mut() {
            traj.push(StepRecord {
                t: (t + 1) as f64 * env.dt(),
                state: env.state_values(&next),
                obs,
                action,
                reward: r,
                cumulative: total,
            });
        }
        state = next;
        if opts.stop_when_done && env.is_done(&state) {
            return RolloutResult {
                return_r: total,
                steps_completed: t + 1,
                trajectory,
                termination: Termination::Done { step: t },
                valid: true,
            };
        }
    }
    RolloutResult {
        return_r: total,
        steps_completed: opts.horizon,
        trajectory,
        termination: Termination::Horizon,
        valid: true,
    }
}

pub fn rollout(program: &PolicyProgram, env_id: EnvId, opts: &RolloutOptions) -> RolloutResult {
    match env_id {
        EnvId::PendulumSwingup => rollout_env(&Pendulum::default(), program, opts),
        EnvId::BallInCup => rollout_env(&BallInCup::default(), program, opts),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoredProgram {
    pub program: PolicyProgram,
    pub score: f64,
    pub env_id: EnvId,
    /// Candidate index within the run; 0 for the starter.
    pub iteration: u64,
    pub generator_id: String,
    pub island: usize,
}

impl ScoredProgram {
    /// Canonical source text, the identity used for deduplication.
    pub fn canonical(&self) -> String {
        self.program.pretty()
    }
}

/// How candidates are scored within a run.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalSettings {
    pub limits: SandboxLimits,
    /// Number of episodes averaged into the score.
    pub episodes: usize,
    /// Seed for episode initial conditions. With one episode and no seed the
    /// environment's default start is used.
    pub seed: Option<u64>,
}

impl Default for EvalSettings {
    fn default() -> Self {
        EvalSettings {
            limits: SandboxLimits::default(),
            episodes: 1,
            seed: None,
        }
    }
}

impl EvalSettings {
    fn episode_seed(&self, k: usize) -> Option<u64> {
        match self.seed {
            None if self.episodes == 1 => None,
            None => Some(split_index(0, k as u64)),
            Some(s) => Some(split_index(s, k as u64)),
        }
    }
}

/// Scores a program, averaging over the configured episodes.
pub fn score_program(
    program: &PolicyProgram,
    spec: &TaskSpec,
    settings: &EvalSettings,
) -> Result<f64, Rejection> {
    let mut sum = 0.0;
    for k in 0..settings.episodes.max(1) {
        let opts = RolloutOptions {
            horizon: spec.horizon,
            seed: settings.episode_seed(k),
            record: false,
            stop_when_done: false,
            limits: settings.limits,
        };
        let result = rollout(program, spec.env_id, &opts);
        if let Termination::Rejected(r) = result.termination {
            return Err(r);
        }
        sum += result.return_r;
    }
    Ok(sum / settings.episodes.max(1) as f64)
}

/// Parses and scores raw generator output. Metadata fields other than the
/// environment are left for the caller to fill.
pub fn evaluate_candidate(
    source: &str,
    spec: &TaskSpec,
    settings: &EvalSettings,
) -> Result<ScoredProgram, Rejection> {
    let program = spec.parse_policy(source).map_err(|e| Rejection {
        category: RejectionCategory::ParseError,
        message: e.to_string(),
        step: None,
    })?;
    let score = score_program(&program, spec, settings)?;
    Ok(ScoredProgram {
        program,
        score,
        env_id: spec.env_id,
        iteration: 0,
        generator_id: String::new(),
        island: 0,
    })
}
