//! Catch-time distribution of a ball-in-cup policy over seeded episodes.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use ctrlsynth_core::environments::{BallInCup, Environment};
use ctrlsynth_core::evaluation::{rollout_env, RolloutOptions, Termination};
use ctrlsynth_core::policy_lang::{PolicyProgram, SandboxLimits};
use ctrlsynth_core::seed::split_index;

pub const BIN_WIDTH_S: f64 = 0.5;
pub const DEFAULT_CAP_S: f64 = 15.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Outcome {
    Caught(f64),
    TimedOut,
    Rejected,
}

/// Outcome of episode `k`, whose start is drawn with seed `split_index(seed, k)`.
pub fn run_episode(program: &PolicyProgram, env: &BallInCup, horizon: usize, seed: u64, k: u64) -> Outcome {
    let opts = RolloutOptions {
        horizon,
        seed: Some(split_index(seed, k)),
        record: false,
        stop_when_done: true,
        limits: SandboxLimits::default(),
    };
    let result = rollout_env(env, program, &opts);
    match result.termination {
        Termination::Done { .. } => Outcome::Caught(result.done_time(env.dt()).unwrap_or(0.0)),
        Termination::Horizon => Outcome::TimedOut,
        Termination::Rejected(_) => Outcome::Rejected,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub episodes: u64,
    pub caught: u64,
    pub timed_out: u64,
    /// Episodes in which the policy failed evaluation.
    pub rejected: u64,
    /// `None` when no episode caught the ball.
    pub median_catch_time: Option<f64>,
    pub seed: u64,
    pub cap_seconds: f64,
    pub bin_width: f64,
}

impl Summary {
    pub fn catch_rate(&self) -> f64 {
        if self.episodes == 0 {
            0.0
        } else {
            self.caught as f64 / self.episodes as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    /// Counts for `[i * BIN_WIDTH_S, (i + 1) * BIN_WIDTH_S)` below the cap.
    pub bins: Vec<u64>,
    pub summary: Summary,
}

impl Histogram {
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "bin_start,bin_end,count")?;
        for (i, c) in self.bins.iter().enumerate() {
            let lo = i as f64 * BIN_WIDTH_S;
            let hi = (lo + BIN_WIDTH_S).min(self.summary.cap_seconds);
            writeln!(w, "{lo:?},{hi:?},{c}")?;
        }
        writeln!(w, "{:?},timeout,{}", self.summary.cap_seconds, self.summary.timed_out)
    }
}

/// Runs `episodes` capped episodes in parallel. Results depend only on the
/// seed, never on scheduling.
pub fn catch_histogram(program: &PolicyProgram, episodes: u64, cap_seconds: f64, seed: u64) -> Histogram {
    let env = BallInCup::default();
    let horizon = (cap_seconds / env.dt()).round() as usize;
    let outcomes: Vec<Outcome> = (0..episodes)
        .into_par_iter()
        .map(|k| run_episode(program, &env, horizon, seed, k))
        .collect();
    let n_bins = (cap_seconds / BIN_WIDTH_S).ceil() as usize;
    let mut bins = vec![0u64; n_bins];
    let mut times = Vec::new();
    let (mut timed_out, mut rejected) = (0, 0);
    for o in outcomes {
        match o {
            Outcome::Caught(t) => {
                let i = ((t / BIN_WIDTH_S).floor() as usize).min(n_bins.saturating_sub(1));
                if let Some(b) = bins.get_mut(i) {
                    *b += 1;
                }
                times.push(t);
            }
            Outcome::TimedOut => timed_out += 1,
            Outcome::Rejected => rejected += 1,
        }
    }
    times.sort_by(f64::total_cmp);
    let median_catch_time = match times.len() {
        0 => None,
        n if n % 2 == 1 => Some(times[n / 2]),
        n => Some(0.5 * (times[n / 2 - 1] + times[n / 2])),
    };
    Histogram {
        bins,
        summary: Summary {
            episodes,
            caught: times.len() as u64,
            timed_out,
            rejected,
            median_catch_time,
            seed,
            cap_seconds,
            bin_width: BIN_WIDTH_S,
        },
    }
}
