//! Deterministic planar simulators. Step functions are pure in
//! `(state, action, params)`.

pub mod ball_in_cup;
pub mod pendulum;

use std::f64::consts::{PI, TAU};
use std::fmt;
use std::io::{self, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use ball_in_cup::{BallCupParams, BallCupState, BallInCup};
pub use pendulum::{Damping, Pendulum, PendulumParams, PendulumState};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EnvError {
    #[error("non-finite state or action")]
    NonFiniteState,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvId {
    PendulumSwingup,
    BallInCup,
}

impl EnvId {
    pub const ALL: [EnvId; 2] = [EnvId::PendulumSwingup, EnvId::BallInCup];

    pub fn name(self) -> &'static str {
        match self {
            EnvId::PendulumSwingup => "pendulum_swingup",
            EnvId::BallInCup => "ball_in_cup",
        }
    }

    pub fn obs_dim(self) -> usize {
        match self {
            EnvId::PendulumSwingup => Pendulum::OBS_DIM,
            EnvId::BallInCup => BallInCup::OBS_DIM,
        }
    }

    pub fn action_dim(self) -> usize {
        match self {
            EnvId::PendulumSwingup => Pendulum::ACTION_DIM,
            EnvId::BallInCup => BallInCup::ACTION_DIM,
        }
    }

    /// Step length of the built-in environment with default parameters.
    pub fn dt(self) -> f64 {
        match self {
            EnvId::PendulumSwingup => Pendulum::default().dt(),
            EnvId::BallInCup => BallInCup::default().dt(),
        }
    }
}

impl fmt::Display for EnvId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown environment '{0}' (expected pendulum_swingup or ball_in_cup)")]
pub struct UnknownEnv(pub String);

impl FromStr for EnvId {
    type Err = UnknownEnv;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "pendulum_swingup" | "pendulum" => Ok(EnvId::PendulumSwingup),
            "ball_in_cup" | "ballcup" => Ok(EnvId::BallInCup),
            other => Err(UnknownEnv(other.to_string())),
        }
    }
}

pub trait Environment: Sync {
    type State: Clone + Send;
    const OBS_DIM: usize;
    const ACTION_DIM: usize;
    /// Column names for [`Environment::state_values`].
    const STATE_FIELDS: &'static [&'static str];

    fn reset(&self, seed: Option<u64>) -> Self::State;
    fn step(&self, s: &Self::State, a: &[f64]) -> Result<Self::State, EnvError>;
    fn reward(&self, s_next: &Self::State, a: &[f64]) -> f64;
    fn observe(&self, s: &Self::State) -> Vec<f64>;
    fn state_values(&self, s: &Self::State) -> Vec<f64>;
    fn dt(&self) -> f64;

    /// Task-level success that may end an episode early.
    fn is_done(&self, _s: &Self::State) -> bool {
        false
    }
}

/// Wraps an angle into `(-π, π]`. Angles already in range are returned unchanged.
pub fn wrap_angle(x: f64) -> f64 {
    if x > -PI && x <= PI {
        return x;
    }
    let y = (x + PI).rem_euclid(TAU) - PI;
    if y <= -PI {
        y + TAU
    } else {
        y
    }
}

/// One row of a recorded trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub t: f64,
    pub state: Vec<f64>,
    pub obs: Vec<f64>,
    pub action: Vec<f64>,
    pub reward: f64,
    pub cumulative: f64,
}

/// Writes a trajectory as CSV: `t`, state, obs, action, reward, cumulative return.
pub fn write_trajectory_csv<W: Write>(
    mut w: W,
    env: EnvId,
    records: &[StepRecord],
) -> io::Result<()> {
    let state_fields = match env {
        EnvId::PendulumSwingup => Pendulum::STATE_FIELDS,
        EnvId::BallInCup => BallInCup::STATE_FIELDS,
    };
    let mut header = vec!["t".to_string()];
    header.extend(state_fields.iter().map(|f| format!("state_{f}")));
    header.extend((0..env.obs_dim()).map(|i| format!("obs_{i}")));
    header.extend((0..env.action_dim()).map(|i| format!("action_{i}")));
    header.push("reward".into());
    header.push("return".into());
    writeln!(w, "{}", header.join(","))?;
    for r in records {
        let mut row = vec![r.t];
        row.extend(&r.state);
        row.extend(&r.obs);
        row.extend(&r.action);
        row.push(r.reward);
        row.push(r.cumulative);
        let cells: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
        writeln!(w, "{}", cells.join(","))?;
    }
    Ok(())
}
