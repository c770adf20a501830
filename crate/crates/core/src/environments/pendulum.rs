//! Torque-limited pendulum swing-up. `theta` is the deviation from upright.

use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{wrap_angle, EnvError, Environment};
use crate::seed::rng_from;

/// Treatment of the viscous damping term in the velocity update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Damping {
    /// `ω' = ω + dt·(g/ℓ·sinθ − bω + u)`
    Explicit,
    /// `ω' = (ω + dt·(g/ℓ·sinθ + u)) / (1 + dt·b)`, unconditionally stable in `b`.
    Implicit,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PendulumParams {
    pub g_grav: f64,
    pub length: f64,
    pub damping_b: f64,
    pub dt: f64,
    /// Angular acceleration (s⁻²) produced by a unit action.
    pub torque_limit: f64,
    pub damping: Damping,
}

/// Unit rod mass gives a unit-torque limit of `1 / (m·ℓ²)` = 4 s⁻².
pub const DEFAULT_TORQUE_LIMIT: f64 = 4.0;

impl Default for PendulumParams {
    fn default() -> Self {
        PendulumParams {
            g_grav: 9.81,
            length: 0.5,
            damping_b: 0.4,
            dt: 0.015,
            torque_limit: DEFAULT_TORQUE_LIMIT,
            damping: Damping::Implicit,
        }
    }
}

impl PendulumParams {
    /// Explicit damping with the torque limit at one sixth of the static
    /// horizontal-lift requirement, `g / (6ℓ)`.
    pub fn sixth_lift() -> Self {
        let base = PendulumParams::default();
        PendulumParams {
            torque_limit: base.g_grav / (6.0 * base.length),
            damping: Damping::Explicit,
            ..base
        }
    }

    /// Undamped variant used for integrator checks.
    pub fn undamped(self) -> Self {
        PendulumParams {
            damping_b: 0.0,
            ..self
        }
    }

    /// Small-oscillation period about the hanging equilibrium.
    pub fn linear_period(&self) -> f64 {
        2.0 * PI * (self.length / self.g_grav).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PendulumState {
    pub theta: f64,
    pub omega: f64,
}

impl PendulumState {
    pub fn hanging() -> Self {
        PendulumState {
            theta: PI,
            omega: 0.0,
        }
    }

    /// Energy per unit `m·ℓ²`, zero at the hanging rest state.
    pub fn energy(&self, p: &PendulumParams) -> f64 {
        0.5 * self.omega * self.omega + p.g_grav / p.length * (1.0 + self.theta.cos())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Pendulum {
    pub params: PendulumParams,
}

impl Pendulum {
    pub fn new(params: PendulumParams) -> Self {
        Pendulum { params }
    }
}

pub fn step(s: &PendulumState, a: f64, p: &PendulumParams) -> Result<PendulumState, EnvError> {
    if !s.theta.is_finite() || !s.omega.is_finite() || !a.is_finite() {
        return Err(EnvError::NonFiniteState);
    }
    let u = p.torque_limit * a;
    let gravity = p.g_grav / p.length * s.theta.sin();
    let omega = match p.damping {
        Damping::Explicit => s.omega + p.dt * (gravity - p.damping_b * s.omega + u),
        Damping::Implicit => (s.omega + p.dt * (gravity + u)) / (1.0 + p.dt * p.damping_b),
    };
    Ok(PendulumState {
        theta: wrap_angle(s.theta + p.dt * omega),
        omega,
    })
}

/// Stage reward on the post-step angle and the normalized action.
pub fn reward(s_next: &PendulumState, a: f64) -> f64 {
    let base = if s_next.theta.abs() > 0.5 { 1.0 } else { 2.0 };
    base - s_next.theta.abs() / PI - 0.1 * a.abs()
}

pub fn reset(seed: Option<u64>) -> PendulumState {
    match seed {
        None => PendulumState::hanging(),
        Some(seed) => {
            let mut rng = rng_from(seed);
            let theta = rng.random_range(PI - 0.1..PI + 0.1);
            PendulumState {
                theta: wrap_angle(theta),
                omega: 0.0,
            }
        }
    }
}

pub fn observe(s: &PendulumState) -> Vec<f64> {
    vec![s.theta.cos(), s.theta.sin(), s.omega]
}

impl Environment for Pendulum {
    type State = PendulumState;
    const OBS_DIM: usize = 3;
    const ACTION_DIM: usize = 1;
    const STATE_FIELDS: &'static [&'static str] = &["theta", "omega"];

    fn reset(&self, seed: Option<u64>) -> PendulumState {
        reset(seed)
    }

    fn step(&self, s: &PendulumState, a: &[f64]) -> Result<PendulumState, EnvError> {
        step(s, a[0], &self.params)
    }

    fn reward(&self, s_next: &PendulumState, a: &[f64]) -> f64 {
        reward(s_next, a[0])
    }

    fn observe(&self, s: &PendulumState) -> Vec<f64> {
        observe(s)
    }

    fn state_values(&self, s: &PendulumState) -> Vec<f64> {
        vec![s.theta, s.omega]
    }

    fn dt(&self) -> f64 {
        self.params.dt
    }
}
