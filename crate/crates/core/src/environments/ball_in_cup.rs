//! Planar ball-in-cup: a PD-driven cup in a box, a ball on an inelastic string.

use std::f64::consts::{PI, TAU};

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{EnvError, Environment};
use crate::seed::rng_from;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BallCupParams {
    pub g_grav: f64,
    pub string_length: f64,
    /// Half-extent of the square cup workspace.
    pub box_half: f64,
    pub dt: f64,
    pub kp: f64,
    pub kd: f64,
    /// Per-axis bound on the commanded cup acceleration.
    pub max_accel: f64,
    pub catch_half_width: f64,
    pub catch_half_height: f64,
}

impl Default for BallCupParams {
    fn default() -> Self {
        BallCupParams {
            g_grav: 9.81,
            string_length: 0.3,
            box_half: 0.25,
            dt: 0.015,
            kp: 100.0,
            kd: 20.0,
            max_accel: 50.0,
            catch_half_width: 0.04,
            catch_half_height: 0.04,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BallCupState {
    pub cup_pos: [f64; 2],
    pub cup_vel: [f64; 2],
    pub ball_pos: [f64; 2],
    pub ball_vel: [f64; 2],
    pub caught: bool,
}

impl BallCupState {
    fn is_finite(&self) -> bool {
        self.cup_pos
            .iter()
            .chain(&self.cup_vel)
            .chain(&self.ball_pos)
            .chain(&self.ball_vel)
            .all(|v| v.is_finite())
    }

    pub fn string_extension(&self) -> f64 {
        let dx = self.ball_pos[0] - self.cup_pos[0];
        let dz = self.ball_pos[1] - self.cup_pos[1];
        dx.hypot(dz)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct BallInCup {
    pub params: BallCupParams,
}

impl BallInCup {
    pub fn new(params: BallCupParams) -> Self {
        BallInCup { params }
    }
}

/// Geometric catch predicate; ignores the latch.
pub fn in_cup(ball: [f64; 2], cup: [f64; 2], p: &BallCupParams) -> bool {
    (ball[0] - cup[0]).abs() < p.catch_half_width
        && cup[1] - p.catch_half_height < ball[1]
        && ball[1] < cup[1]
}

pub fn is_caught(s: &BallCupState, p: &BallCupParams) -> bool {
    s.caught || in_cup(s.ball_pos, s.cup_pos, p)
}

pub fn step(s: &BallCupState, a: &[f64], p: &BallCupParams) -> Result<BallCupState, EnvError> {
    if !s.is_finite() || a.iter().any(|v| !v.is_finite()) {
        return Err(EnvError::NonFiniteState);
    }
    let mut cup_pos = s.cup_pos;
    let mut cup_vel = s.cup_vel;
    for k in 0..2 {
        let reference = a[k] * p.box_half;
        let acc = (p.kp * (reference - cup_pos[k]) - p.kd * cup_vel[k])
            .clamp(-p.max_accel, p.max_accel);
        cup_vel[k] += p.dt * acc;
        cup_pos[k] += p.dt * cup_vel[k];
        if cup_pos[k].abs() > p.box_half {
            cup_pos[k] = cup_pos[k].clamp(-p.box_half, p.box_half);
            cup_vel[k] = 0.0;
        }
    }

    let mut ball_vel = [s.ball_vel[0], s.ball_vel[1] - p.dt * p.g_grav];
    let mut ball_pos = [
        s.ball_pos[0] + p.dt * ball_vel[0],
        s.ball_pos[1] + p.dt * ball_vel[1],
    ];

    let d = [ball_pos[0] - cup_pos[0], ball_pos[1] - cup_pos[1]];
    let dist = d[0].hypot(d[1]);
    if dist > p.string_length {
        let n = [d[0] / dist, d[1] / dist];
        ball_pos = [
            cup_pos[0] + n[0] * p.string_length,
            cup_pos[1] + n[1] * p.string_length,
        ];
        let radial = (ball_vel[0] - cup_vel[0]) * n[0] + (ball_vel[1] - cup_vel[1]) * n[1];
        if radial > 0.0 {
            ball_vel = [ball_vel[0] - radial * n[0], ball_vel[1] - radial * n[1]];
        }
    }

    let mut next = BallCupState {
        cup_pos,
        cup_vel,
        ball_pos,
        ball_vel,
        caught: s.caught,
    };
    next.caught = is_caught(&next, p);
    Ok(next)
}

pub fn reward(s_next: &BallCupState) -> f64 {
    if s_next.caught {
        return 1.0;
    }
    let theta = (s_next.ball_pos[0] - s_next.cup_pos[0]).atan2(s_next.ball_pos[1] - s_next.cup_pos[1]);
    let speed = s_next.ball_vel[0].hypot(s_next.ball_vel[1]);
    1.0 - theta.abs() / PI - 0.1 * speed
}

/// Cup at rest at the origin. Seeded resets place the ball uniformly over the
/// string-length disk, rejecting positions inside the catch box.
pub fn reset(seed: Option<u64>, p: &BallCupParams) -> BallCupState {
    let ball_pos = match seed {
        None => [0.0, -p.string_length],
        Some(seed) => {
            let mut rng = rng_from(seed);
            loop {
                let r = p.string_length * rng.random::<f64>().sqrt();
                let phi = TAU * rng.random::<f64>();
                let pos = [r * phi.cos(), r * phi.sin()];
                if !in_cup(pos, [0.0, 0.0], p) && pos[0].hypot(pos[1]) <= p.string_length {
                    break pos;
                }
            }
        }
    };
    BallCupState {
        cup_pos: [0.0, 0.0],
        cup_vel: [0.0, 0.0],
        ball_pos,
        ball_vel: [0.0, 0.0],
        caught: false,
    }
}

pub fn observe(s: &BallCupState) -> Vec<f64> {
    vec![
        s.cup_pos[0],
        s.cup_pos[1],
        s.ball_pos[0],
        s.ball_pos[1],
        s.cup_vel[0],
        s.cup_vel[1],
        s.ball_vel[0],
        s.ball_vel[1],
    ]
}

impl Environment for BallInCup {
    type State = BallCupState;
    const OBS_DIM: usize = 8;
    const ACTION_DIM: usize = 2;
    const STATE_FIELDS: &'static [&'static str] = &[
        "x_cup", "z_cup", "x_ball", "z_ball", "vx_cup", "vz_cup", "vx_ball", "vz_ball", "caught",
    ];

    fn reset(&self, seed: Option<u64>) -> BallCupState {
        reset(seed, &self.params)
    }

    fn step(&self, s: &BallCupState, a: &[f64]) -> Result<BallCupState, EnvError> {
        step(s, a, &self.params)
    }

    fn reward(&self, s_next: &BallCupState, _a: &[f64]) -> f64 {
        reward(s_next)
    }

    fn observe(&self, s: &BallCupState) -> Vec<f64> {
        observe(s)
    }

    fn state_values(&self, s: &BallCupState) -> Vec<f64> {
        let mut v = observe(s);
        v.push(if s.caught { 1.0 } else { 0.0 });
        v
    }

    fn dt(&self) -> f64 {
        self.params.dt
    }

    fn is_done(&self, s: &BallCupState) -> bool {
        s.caught
    }
}
