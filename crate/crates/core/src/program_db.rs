//! Island-model program database with two-stage parent sampling, periodic
//! resets and JSON-lines checkpoints.

use std::collections::HashSet;
use std::fs;
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::environments::EnvId;
use crate::evaluation::ScoredProgram;
use crate::policy_lang::PolicyProgram;
use crate::seed::{rng_from, RngState};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum DbError {
    #[error("island {0} does not exist")]
    InvalidIsland(usize),
    #[error("score {0} is not finite")]
    NonFiniteScore(f64),
    #[error("checkpoint I/O on {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("malformed checkpoint {path}: {msg}")]
    Malformed { path: PathBuf, msg: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DbConfig {
    pub islands: usize,
    pub capacity: usize,
    pub tau_db: f64,
    pub reset_period: usize,
}

impl Default for DbConfig {
    fn default() -> Self {
        DbConfig {
            islands: 10,
            capacity: 100,
            tau_db: 1.0,
            reset_period: 2000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Island {
    pub id: usize,
    /// Sorted by score, descending; equal scores keep insertion order.
    pub members: Vec<ScoredProgram>,
    canon: HashSet<String>,
}

impl Island {
    fn new(id: usize) -> Self {
        Island {
            id,
            members: Vec::new(),
            canon: HashSet::new(),
        }
    }

    /// Best member score, or `-inf` when empty.
    pub fn best_score(&self) -> f64 {
        self.members.first().map_or(f64::NEG_INFINITY, |m| m.score)
    }

    pub fn best(&self) -> Option<&ScoredProgram> {
        self.members.first()
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn contains_source(&self, canonical: &str) -> bool {
        self.canon.contains(canonical)
    }

    fn clear(&mut self) {
        self.members.clear();
        self.canon.clear();
    }

    fn insert_sorted(&mut self, sp: ScoredProgram, canonical: String) {
        let at = self.members.partition_point(|m| m.score >= sp.score);
        self.members.insert(at, sp);
        self.canon.insert(canonical);
    }

    fn pop_worst(&mut self) {
        if let Some(worst) = self.members.pop() {
            self.canon.remove(&worst.canonical());
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegisterOutcome {
    Inserted,
    /// Inserted and the lowest-scoring member was evicted.
    Evicted,
    /// Island full and the candidate does not beat its minimum.
    BelowCapacityFloor,
    /// The island already holds the same canonical source.
    Duplicate,
}

impl RegisterOutcome {
    pub fn inserted(self) -> bool {
        matches!(self, RegisterOutcome::Inserted | RegisterOutcome::Evicted)
    }
}

/// Parents drawn for one prompt.
#[derive(Debug, Clone, PartialEq)]
pub struct Parents {
    pub island: usize,
    pub low: PolicyProgram,
    pub high: PolicyProgram,
    /// Iterations of the source programs; `None` for the starter.
    pub lineage: (Option<u64>, Option<u64>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResetReport {
    /// Emptied islands, ascending.
    pub reset: Vec<usize>,
    /// Survivor copied into each emptied island, aligned with `reset`.
    pub sources: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct IslandDatabase {
    pub config: DbConfig,
    islands: Vec<Island>,
    registrations: u64,
    rng_seed: u64,
    rng: ChaCha8Rng,
}

impl PartialEq for IslandDatabase {
    fn eq(&self, other: &Self) -> bool {
        self.config == other.config
            && self.islands == other.islands
            && self.registrations == other.registrations
            && self.rng_state() == other.rng_state()
    }
}

impl IslandDatabase {
    pub fn new(config: DbConfig, seed: u64) -> Self {
        assert!(config.islands >= 1 && config.capacity >= 1);
        IslandDatabase {
            config,
            islands: (0..config.islands).map(Island::new).collect(),
            registrations: 0,
            rng_seed: seed,
            rng: rng_from(seed),
        }
    }

    pub fn islands(&self) -> &[Island] {
        &self.islands
    }

    pub fn registrations(&self) -> u64 {
        self.registrations
    }

    pub fn rng_state(&self) -> RngState {
        RngState::capture(self.rng_seed, &self.rng)
    }

    pub fn len(&self) -> usize {
        self.islands.iter().map(Island::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.islands.iter().all(Island::is_empty)
    }

    /// Global best; ties resolve to the lowest island id.
    pub fn best(&self) -> Option<&ScoredProgram> {
        let mut best: Option<&ScoredProgram> = None;
        for island in &self.islands {
            if let Some(m) = island.best() {
                if best.is_none_or(|b| m.score > b.score) {
                    best = Some(m);
                }
            }
        }
        best
    }

    pub fn best_score(&self) -> f64 {
        self.best().map_or(f64::NEG_INFINITY, |b| b.score)
    }

    /// All members, best first.
    pub fn top(&self, k: usize) -> Vec<&ScoredProgram> {
        let mut all: Vec<&ScoredProgram> = self.islands.iter().flat_map(|i| &i.members).collect();
        all.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.island.cmp(&b.island)));
        all.truncate(k);
        all
    }

    pub fn find_iteration(&self, iteration: u64) -> Option<&ScoredProgram> {
        self.islands
            .iter()
            .flat_map(|i| &i.members)
            .find(|m| m.iteration == iteration)
    }

    fn place(&mut self, mut sp: ScoredProgram, island_id: usize) -> Result<RegisterOutcome, DbError> {
        if !sp.score.is_finite() {
            return Err(DbError::NonFiniteScore(sp.score));
        }
        let capacity = self.config.capacity;
        let island = self
            .islands
            .get_mut(island_id)
            .ok_or(DbError::InvalidIsland(island_id))?;
        let canonical = sp.canonical();
        if island.contains_source(&canonical) {
            return Ok(RegisterOutcome::Duplicate);
        }
        let full = island.len() >= capacity;
        if full && sp.score <= island.members[island.len() - 1].score {
            return Ok(RegisterOutcome::BelowCapacityFloor);
        }
        sp.island = island_id;
        island.insert_sorted(sp, canonical);
        if full {
            island.pop_worst();
            Ok(RegisterOutcome::Evicted)
        } else {
            Ok(RegisterOutcome::Inserted)
        }
    }

    /// Inserts a scored program; counts towards the reset period only when it
    /// actually enters the island.
    pub fn register(&mut self, sp: ScoredProgram, island_id: usize) -> Result<RegisterOutcome, DbError> {
        let outcome = self.place(sp, island_id)?;
        if outcome.inserted() {
            self.registrations += 1;
        }
        Ok(outcome)
    }

    /// Places a copy of `sp` in every island without counting registrations.
    pub fn seed_all(&mut self, sp: &ScoredProgram) -> Result<(), DbError> {
        for island in 0..self.islands.len() {
            self.place(sp.clone(), island)?;
        }
        Ok(())
    }

    /// True when the latest registration completed a reset period.
    pub fn reset_due(&self) -> bool {
        self.registrations > 0 && self.registrations.is_multiple_of(self.config.reset_period as u64)
    }

    fn softmax_pick(&mut self, scores: &[f64], exclude: Option<usize>) -> usize {
        let tau = self.config.tau_db;
        let max = scores
            .iter()
            .enumerate()
            .filter(|(i, _)| Some(*i) != exclude)
            .map(|(_, s)| *s)
            .fold(f64::NEG_INFINITY, f64::max);
        let weights: Vec<f64> = scores
            .iter()
            .enumerate()
            .map(|(i, s)| if Some(i) == exclude { 0.0 } else { ((s - max) / tau).exp() })
            .collect();
        let total: f64 = weights.iter().sum();
        let mut u = self.rng.random::<f64>() * total;
        let mut last = 0;
        for (i, w) in weights.iter().enumerate() {
            if *w <= 0.0 {
                continue;
            }
            last = i;
            if u < *w {
                return i;
            }
            u -= w;
        }
        last
    }

    /// Two-stage sampling: a uniform island, then two distinct members by
    /// softmax over scores. `high` scores at least as well as `low`.
    pub fn sample_prompt_programs(&mut self, starter: &PolicyProgram) -> Parents {
        let island = self.rng.random_range(0..self.islands.len());
        let scores: Vec<f64> = self.islands[island].members.iter().map(|m| m.score).collect();
        let (a, b) = match scores.len() {
            0 => {
                return Parents {
                    island,
                    low: starter.clone(),
                    high: starter.clone(),
                    lineage: (None, None),
                }
            }
            1 => (0, 0),
            _ => {
                let first = self.softmax_pick(&scores, None);
                let second = self.softmax_pick(&scores, Some(first));
                if scores[second] > scores[first] {
                    (second, first)
                } else {
                    (first, second)
                }
            }
        };
        let members = &self.islands[island].members;
        let (high, low) = (&members[a], &members[b]);
        Parents {
            island,
            low: low.program.clone(),
            high: high.program.clone(),
            lineage: (Some(low.iteration), Some(high.iteration)),
        }
    }

    /// Empties the worst half of the islands, ranked by best score with ties
    /// favouring the lower id, and reseeds each from a random survivor.
    pub fn reset_islands(&mut self) -> ResetReport {
        let n = self.islands.len();
        let mut ranked: Vec<usize> = (0..n).collect();
        ranked.sort_by(|&a, &b| {
            self.islands[b]
                .best_score()
                .total_cmp(&self.islands[a].best_score())
                .then(a.cmp(&b))
        });
        let k = n / 2;
        let survivors: Vec<usize> = ranked[..n - k].to_vec();
        let mut reset: Vec<usize> = ranked[n - k..].to_vec();
        reset.sort_unstable();
        let mut sources = Vec::with_capacity(reset.len());
        for &id in &reset {
            self.islands[id].clear();
            let src = survivors[self.rng.random_range(0..survivors.len())];
            sources.push(src);
            if let Some(best) = self.islands[src].best().cloned() {
                // The island was just emptied, so this cannot fail or dedupe.
                let _ = self.place(best, id);
            }
        }
        ResetReport { reset, sources }
    }

    pub fn checkpoint(&self, path: &Path) -> Result<(), DbError> {
        self.checkpoint_with(path, &serde_json::Value::Null)
    }

    /// Writes the database plus an opaque `extra` record (orchestrator state).
    /// The file is written to a temporary sibling and renamed into place.
    pub fn checkpoint_with(&self, path: &Path, extra: &serde_json::Value) -> Result<(), DbError> {
        let io_err = |source| DbError::Io {
            path: path.to_path_buf(),
            source,
        };
        let header = Header {
            kind: "header".into(),
            version: CHECKPOINT_VERSION,
            config: self.config,
            config_hash: extra
                .get("config_hash")
                .and_then(|v| v.as_u64())
                .unwrap_or(0),
            registrations: self.registrations,
            rng: self.rng_state(),
            extra: extra.clone(),
        };
        let mut text = serde_json::to_string(&header).expect("header serializes");
        text.push('\n');
        let mut count = 0usize;
        for island in &self.islands {
            for m in &island.members {
                let rec = ProgramRecord {
                    kind: "program".into(),
                    island: island.id,
                    score: m.score,
                    iteration: m.iteration,
                    generator_id: m.generator_id.clone(),
                    env_id: m.env_id,
                    source: m.canonical(),
                };
                text.push_str(&serde_json::to_string(&rec).expect("record serializes"));
                text.push('\n');
                count += 1;
            }
        }
        text.push_str(&serde_json::to_string(&Trailer { kind: "end".into(), programs: count }).expect("trailer"));
        text.push('\n');

        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(io_err)?;
        }
        let tmp = path.with_extension("tmp");
        {
            let mut f = fs::File::create(&tmp).map_err(io_err)?;
            f.write_all(text.as_bytes()).map_err(io_err)?;
            f.sync_all().map_err(io_err)?;
        }
        fs::rename(&tmp, path).map_err(io_err)
    }

    pub fn restore(path: &Path) -> Result<IslandDatabase, DbError> {
        Ok(Self::restore_with(path)?.0)
    }

    /// Restores a database and returns the `extra` record written with it.
    pub fn restore_with(path: &Path) -> Result<(IslandDatabase, serde_json::Value), DbError> {
        let bad = |msg: String| DbError::Malformed {
            path: path.to_path_buf(),
            msg,
        };
        let file = fs::File::open(path).map_err(|source| DbError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut lines = BufReader::new(file).lines();
        let mut next_line = |what: &str| -> Result<Option<String>, DbError> {
            match lines.next() {
                None => Ok(None),
                Some(Ok(l)) => Ok(Some(l)),
                Some(Err(e)) => Err(DbError::Malformed {
                    path: path.to_path_buf(),
                    msg: format!("reading {what}: {e}"),
                }),
            }
        };
        let header_line = next_line("header")?.ok_or_else(|| bad("empty file".into()))?;
        let header: Header =
            serde_json::from_str(&header_line).map_err(|e| bad(format!("header: {e}")))?;
        if header.kind != "header" || header.version != CHECKPOINT_VERSION {
            return Err(bad(format!(
                "unsupported header kind '{}' version {}",
                header.kind, header.version
            )));
        }
        if header.config.islands == 0 || header.config.capacity == 0 {
            return Err(bad("header declares no islands or zero capacity".into()));
        }
        let mut db = IslandDatabase::new(header.config, header.rng.seed);
        db.rng = header.rng.restore();
        db.registrations = header.registrations;

        let mut programs = 0usize;
        let mut lineno = 1;
        loop {
            lineno += 1;
            let Some(line) = next_line("record")? else {
                return Err(bad("truncated: missing end record".into()));
            };
            let value: serde_json::Value =
                serde_json::from_str(&line).map_err(|e| bad(format!("line {lineno}: {e}")))?;
            match value.get("kind").and_then(|k| k.as_str()) {
                Some("program") => {
                    let rec: ProgramRecord = serde_json::from_value(value)
                        .map_err(|e| bad(format!("line {lineno}: {e}")))?;
                    let program = PolicyProgram::parse(&rec.source, rec.env_id.obs_dim(), rec.env_id.action_dim())
                        .map_err(|e| bad(format!("line {lineno}: stored program does not parse: {e}")))?;
                    let island = db
                        .islands
                        .get_mut(rec.island)
                        .ok_or_else(|| bad(format!("line {lineno}: island {} out of range", rec.island)))?;
                    if island.len() >= header.config.capacity {
                        return Err(bad(format!("line {lineno}: island {} over capacity", rec.island)));
                    }
                    if island.members.last().is_some_and(|m| m.score < rec.score) {
                        return Err(bad(format!("line {lineno}: island {} not sorted", rec.island)));
                    }
                    let canonical = program.pretty();
                    if canonical != rec.source {
                        return Err(bad(format!("line {lineno}: source is not canonical")));
                    }
                    island.canon.insert(canonical);
                    island.members.push(ScoredProgram {
                        program,
                        score: rec.score,
                        env_id: rec.env_id,
                        iteration: rec.iteration,
                        generator_id: rec.generator_id,
                        island: rec.island,
                    });
                    programs += 1;
                }
                Some("end") => {
                    let trailer: Trailer = serde_json::from_value(value)
                        .map_err(|e| bad(format!("line {lineno}: {e}")))?;
                    if trailer.programs != programs {
                        return Err(bad(format!(
                            "end record counts {} programs, found {programs}",
                            trailer.programs
                        )));
                    }
                    break;
                }
                _ => return Err(bad(format!("line {lineno}: unknown record"))),
            }
        }
        Ok((db, header.extra))
    }
}

#[derive(Serialize, Deserialize)]
struct Header {
    kind: String,
    version: u32,
    config: DbConfig,
    config_hash: u64,
    registrations: u64,
    rng: RngState,
    #[serde(default)]
    extra: serde_json::Value,
}

#[derive(Serialize, Deserialize)]
struct ProgramRecord {
    kind: String,
    island: usize,
    score: f64,
    iteration: u64,
    generator_id: String,
    env_id: EnvId,
    source: String,
}

#[derive(Serialize, Deserialize)]
struct Trailer {
    kind: String,
    programs: usize,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sp(score: f64, tag: usize) -> ScoredProgram {
        let src = format!("def policy(obs):\n    return {}\n", tag as f64 * 0.001);
        ScoredProgram {
            program: PolicyProgram::parse(&src, 3, 1).unwrap(),
            score,
            env_id: EnvId::PendulumSwingup,
            iteration: tag as u64,
            generator_id: "test".into(),
            island: 0,
        }
    }

    fn db(islands: usize, capacity: usize) -> IslandDatabase {
        IslandDatabase::new(
            DbConfig {
                islands,
                capacity,
                ..DbConfig::default()
            },
            3,
        )
    }

    fn starter() -> PolicyProgram {
        PolicyProgram::parse("def policy(obs):\n    return 0.0\n", 3, 1).unwrap()
    }

    #[test]
    fn first_insertion() {
        let mut d = db(10, 3);
        assert_eq!(d.register(sp(2.5, 1), 4).unwrap(), RegisterOutcome::Inserted);
        assert_eq!(d.islands()[4].len(), 1);
        assert_eq!(d.islands()[4].best_score(), 2.5);
        assert_eq!(d.registrations(), 1);
    }

    #[test]
    fn capacity_rule() {
        let mut d = db(2, 3);
        for (i, s) in [3.0, 4.0, 6.0].into_iter().enumerate() {
            d.register(sp(s, i), 0).unwrap();
        }
        assert_eq!(d.register(sp(5.0, 10), 0).unwrap(), RegisterOutcome::Evicted);
        let scores: Vec<f64> = d.islands()[0].members.iter().map(|m| m.score).collect();
        assert_eq!(scores, vec![6.0, 5.0, 4.0]);

        let before = d.clone();
        assert_eq!(d.register(sp(1.0, 11), 0).unwrap(), RegisterOutcome::BelowCapacityFloor);
        assert_eq!(d, before);
    }

    #[test]
    fn duplicates_and_errors() {
        let mut d = db(2, 3);
        d.register(sp(1.0, 1), 0).unwrap();
        assert_eq!(d.register(sp(9.0, 1), 0).unwrap(), RegisterOutcome::Duplicate);
        assert_eq!(d.register(sp(9.0, 1), 1).unwrap(), RegisterOutcome::Inserted);
        assert!(matches!(d.register(sp(1.0, 2), 7), Err(DbError::InvalidIsland(7))));
        assert!(matches!(d.register(sp(f64::NAN, 2), 0), Err(DbError::NonFiniteScore(_))));
    }

    #[test]
    fn sampling_fallbacks() {
        let mut d = db(10, 5);
        let p = d.sample_prompt_programs(&starter());
        assert_eq!(p.low, starter());
        assert_eq!(p.high, starter());

        let mut d = db(2, 5);
        let m = sp(1.0, 1);
        d.register(m.clone(), 0).unwrap();
        d.register(m.clone(), 1).unwrap();
        let p = d.sample_prompt_programs(&starter());
        assert_eq!(p.low, m.program);
        assert_eq!(p.high, m.program);
    }

    #[test]
    fn softmax_prefers_better_parent() {
        let mut d = IslandDatabase::new(
            DbConfig {
                islands: 2,
                capacity: 5,
                tau_db: 0.1,
                reset_period: 2000,
            },
            17,
        );
        for island in 0..2 {
            d.register(sp(10.0, 1), island).unwrap();
            d.register(sp(0.0, 2), island).unwrap();
        }
        let high = sp(10.0, 1).program;
        let draws = 10_000;
        let mut first_pick_high = 0;
        for _ in 0..draws {
            let p = d.sample_prompt_programs(&starter());
            assert_eq!(p.high, high);
            // Repeat the first softmax draw alone to measure selection bias.
            if d.softmax_pick(&[10.0, 0.0], None) == 0 {
                first_pick_high += 1;
            }
        }
        assert!(first_pick_high as f64 / draws as f64 >= 0.99);
    }

    #[test]
    fn reset_rules() {
        let mut d = db(10, 5);
        for i in 0..10 {
            d.register(sp(i as f64, i), i).unwrap();
        }
        let best = d.best_score();
        let report = d.reset_islands();
        assert_eq!(report.reset, vec![0, 1, 2, 3, 4]);
        for (&id, &src) in report.reset.iter().zip(&report.sources) {
            assert!(src >= 5);
            assert_eq!(d.islands()[id].len(), 1);
            assert_eq!(d.islands()[id].best_score(), src as f64);
        }
        assert_eq!(d.best_score(), best);
        assert_eq!(d.islands().len(), 10);
    }

    #[test]
    fn reset_tie_break() {
        let mut d = db(2, 5);
        d.register(sp(1.0, 1), 0).unwrap();
        d.register(sp(1.0, 2), 1).unwrap();
        let report = d.reset_islands();
        assert_eq!(report.reset, vec![1]);
        assert_eq!(report.sources, vec![0]);
        assert_eq!(d.islands()[1].members[0].iteration, 1);
    }

    #[test]
    fn reset_due_counts_registrations() {
        let mut d = IslandDatabase::new(
            DbConfig {
                islands: 2,
                capacity: 10,
                tau_db: 1.0,
                reset_period: 3,
            },
            1,
        );
        let mut due = Vec::new();
        for i in 0..6 {
            d.register(sp(i as f64, i), 0).unwrap();
            due.push(d.reset_due());
        }
        assert_eq!(due, vec![false, false, true, false, false, true]);
    }

    #[test]
    fn checkpoint_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ckpt-3.db");
        let mut d = db(10, 5);
        d.register(sp(1.0, 1), 0).unwrap();
        d.register(sp(2.0, 2), 0).unwrap();
        d.register(sp(3.0, 3), 5).unwrap();
        d.sample_prompt_programs(&starter());
        let extra = serde_json::json!({"note": "x"});
        d.checkpoint_with(&path, &extra).unwrap();
        let (restored, got_extra) = IslandDatabase::restore_with(&path).unwrap();
        assert_eq!(restored, d);
        assert_eq!(got_extra, extra);

        let mut a = d.clone();
        let mut b = restored;
        for _ in 0..20 {
            assert_eq!(a.sample_prompt_programs(&starter()), b.sample_prompt_programs(&starter()));
        }
    }

    #[test]
    fn truncated_checkpoint_is_malformed() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.db");
        let mut d = db(3, 5);
        d.register(sp(1.0, 1), 0).unwrap();
        d.register(sp(2.0, 2), 1).unwrap();
        d.checkpoint(&path).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        let cut: Vec<&str> = text.lines().take(2).collect();
        fs::write(&path, cut.join("\n")).unwrap();
        assert!(matches!(IslandDatabase::restore(&path), Err(DbError::Malformed { .. })));
        fs::write(&path, &text[..text.len() / 2]).unwrap();
        assert!(matches!(IslandDatabase::restore(&path), Err(DbError::Malformed { .. })));
        assert!(matches!(
            IslandDatabase::restore(&dir.path().join("missing.db")),
            Err(DbError::Io { .. })
        ));
    }
}
