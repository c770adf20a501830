//! Task specification files and layered run configuration.
//!
//! A spec file has four sections:
//!
//! ````text
//! [task]
//! description = """Free text,
//! possibly several lines."""
//!
//! [env]
//! id = pendulum_swingup
//! horizon = 1000
//!
//! [starter]
//! ```python
//! def policy(obs):
//!     return 0.0
//! ```
//!
//! [run]
//! seed = 42
//! ````
//!
//! Keys are `name = value`; values may be bare, `"quoted"` or `"""triple
//! quoted"""`. Lines starting with `#` outside the starter block are comments.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::environments::EnvId;
use crate::policy_lang::{EvalError, ParseError, PolicyProgram, SandboxLimits};

pub const DEFAULT_HORIZON: usize = 1000;

#[derive(Debug, Error)]
pub enum SpecError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("line {line}: {msg}")]
    Malformed { line: usize, msg: String },
    #[error("starter policy: {0}")]
    Starter(ParseError),
    #[error("starter policy fails on a zero observation: {0}")]
    StarterRuntime(EvalError),
    #[error("{0}")]
    UnknownEnv(#[from] crate::environments::UnknownEnv),
    #[error("horizon must be ≥ 1")]
    Horizon,
    #[error("{key} = {given} does not match {env} (expected {expected})")]
    DimMismatch {
        key: &'static str,
        env: EnvId,
        given: usize,
        expected: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskSpec {
    pub task_description: String,
    pub starter_policy_source: String,
    pub env_id: EnvId,
    pub horizon: usize,
    pub obs_dim: usize,
    pub action_dim: usize,
    /// Raw `[run]` entries in file order, applied by [`RunConfig::layered`].
    pub run: Vec<(String, String)>,
}

impl TaskSpec {
    /// A spec with default starter and description, for programmatic use.
    pub fn new(env_id: EnvId, horizon: usize) -> Self {
        TaskSpec {
            task_description: String::new(),
            starter_policy_source: default_starter(env_id),
            env_id,
            horizon,
            obs_dim: env_id.obs_dim(),
            action_dim: env_id.action_dim(),
            run: Vec::new(),
        }
    }

    pub fn starter(&self) -> Result<PolicyProgram, ParseError> {
        PolicyProgram::parse(&self.starter_policy_source, self.obs_dim, self.action_dim)
    }

    pub fn parse_policy(&self, source: &str) -> Result<PolicyProgram, ParseError> {
        PolicyProgram::parse(source, self.obs_dim, self.action_dim)
    }
}

/// The zero-action policy used when a spec has no `[starter]` section.
pub fn default_starter(env: EnvId) -> String {
    let zero = match env.action_dim() {
        1 => "0.0".to_string(),
        n => format!("[{}]", vec!["0.0"; n].join(", ")),
    };
    format!(
        "def policy(obs: np.ndarray) -> {}:\n    \"\"\"Returns a control action.\"\"\"\n    return {zero}\n",
        if env.action_dim() == 1 { "float" } else { "np.ndarray" }
    )
}

pub fn load_spec(path: &Path) -> Result<TaskSpec, SpecError> {
    let text = std::fs::read_to_string(path).map_err(|source| SpecError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_spec(&text)
}

#[derive(Debug, Default)]
struct Sections {
    task: Vec<(usize, String, String)>,
    env: Vec<(usize, String, String)>,
    starter: Option<String>,
    run: Vec<(usize, String, String)>,
}

fn malformed(line: usize, msg: impl Into<String>) -> SpecError {
    SpecError::Malformed {
        line,
        msg: msg.into(),
    }
}

fn split_sections(text: &str) -> Result<Sections, SpecError> {
    let lines: Vec<&str> = text.lines().collect();
    let mut out = Sections::default();
    let mut section: Option<String> = None;
    let mut seen = Vec::new();
    let mut i = 0;
    while i < lines.len() {
        let lineno = i + 1;
        let line = lines[i].trim();
        i += 1;
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if line.starts_with('[') && line.ends_with(']') {
            let name = line[1..line.len() - 1].trim().to_string();
            if !["task", "env", "starter", "run"].contains(&name.as_str()) {
                return Err(malformed(lineno, format!("unknown section [{name}]")));
            }
            if seen.contains(&name) {
                return Err(malformed(lineno, format!("duplicate section [{name}]")));
            }
            seen.push(name.clone());
            section = Some(name);
            continue;
        }
        match section.as_deref() {
            None => return Err(malformed(lineno, "content before the first section")),
            Some("starter") => {
                if !line.starts_with("```") {
                    return Err(malformed(lineno, "starter program must be a ``` fenced block"));
                }
                let start = i;
                let end = (start..lines.len())
                    .find(|&k| lines[k].trim() == "```")
                    .ok_or_else(|| malformed(lineno, "unterminated ``` block"))?;
                if out.starter.is_some() {
                    return Err(malformed(lineno, "more than one starter block"));
                }
                let mut body = lines[start..end].join("\n");
                body.push('\n');
                out.starter = Some(body);
                i = end + 1;
            }
            Some(name) => {
                let (key, rest) = line
                    .split_once('=')
                    .ok_or_else(|| malformed(lineno, format!("expected `key = value`, found `{line}`")))?;
                let key = key.trim().to_string();
                if key.is_empty() {
                    return Err(malformed(lineno, "empty key"));
                }
                let rest = rest.trim();
                let value = if let Some(after) = rest.strip_prefix("\"\"\"") {
                    // Triple-quoted text may span lines.
                    if let Some(v) = after.strip_suffix("\"\"\"") {
                        v.to_string()
                    } else {
                        let mut parts = vec![after.to_string()];
                        loop {
                            let Some(next) = lines.get(i) else {
                                return Err(malformed(lineno, "unterminated \"\"\" string"));
                            };
                            i += 1;
                            if let Some(last) = next.strip_suffix("\"\"\"") {
                                parts.push(last.to_string());
                                break;
                            }
                            parts.push(next.to_string());
                        }
                        parts.join("\n")
                    }
                } else if rest.len() >= 2 && rest.starts_with('"') && rest.ends_with('"') {
                    rest[1..rest.len() - 1].to_string()
                } else {
                    rest.to_string()
                };
                let entry = (lineno, key, value);
                match name {
                    "task" => out.task.push(entry),
                    "env" => out.env.push(entry),
                    _ => out.run.push(entry),
                }
            }
        }
    }
    Ok(out)
}

pub fn parse_spec(text: &str) -> Result<TaskSpec, SpecError> {
    let sections = split_sections(text)?;

    let mut description = String::new();
    for (line, key, value) in &sections.task {
        match key.as_str() {
            "description" => description = value.clone(),
            other => return Err(malformed(*line, format!("unknown [task] key '{other}'"))),
        }
    }

    let mut env_id = None;
    let mut horizon = DEFAULT_HORIZON;
    let mut dims: Vec<(&'static str, usize)> = Vec::new();
    for (line, key, value) in &sections.env {
        let int = |v: &str| {
            v.parse::<i64>()
                .map_err(|_| malformed(*line, format!("{key} must be an integer, found '{v}'")))
        };
        match key.as_str() {
            "id" => env_id = Some(value.parse::<EnvId>()?),
            "horizon" => {
                let h = int(value)?;
                if h < 1 {
                    return Err(SpecError::Horizon);
                }
                horizon = h as usize;
            }
            "obs_dim" => dims.push(("obs_dim", int(value)?.max(0) as usize)),
            "action_dim" => dims.push(("action_dim", int(value)?.max(0) as usize)),
            other => return Err(malformed(*line, format!("unknown [env] key '{other}'"))),
        }
    }
    let env_id = env_id.ok_or_else(|| malformed(0, "[env] id is required"))?;
    for (key, given) in dims {
        let expected = if key == "obs_dim" {
            env_id.obs_dim()
        } else {
            env_id.action_dim()
        };
        if given != expected {
            return Err(SpecError::DimMismatch {
                key,
                env: env_id,
                given,
                expected,
            });
        }
    }

    let spec = TaskSpec {
        task_description: description,
        starter_policy_source: sections.starter.unwrap_or_else(|| default_starter(env_id)),
        env_id,
        horizon,
        obs_dim: env_id.obs_dim(),
        action_dim: env_id.action_dim(),
        run: sections.run.into_iter().map(|(_, k, v)| (k, v)).collect(),
    };
    let starter = spec.starter().map_err(SpecError::Starter)?;
    starter
        .eval(&vec![0.0; spec.obs_dim], &SandboxLimits::default())
        .map_err(SpecError::StarterRuntime)?;
    Ok(spec)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorKind {
    Mock,
    Remote,
}

impl fmt::Display for GeneratorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GeneratorKind::Mock => "mock",
            GeneratorKind::Remote => "remote",
        })
    }
}

impl FromStr for GeneratorKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mock" => Ok(GeneratorKind::Mock),
            "remote" => Ok(GeneratorKind::Remote),
            other => Err(format!("unknown generator '{other}' (expected mock or remote)")),
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("cannot read config {path}: {msg}")]
    Io { path: PathBuf, msg: String },
    #[error("unknown run setting '{0}'")]
    UnknownKey(String),
    #[error("{key}: expected {expected}, found '{value}'")]
    Invalid {
        key: String,
        value: String,
        expected: &'static str,
    },
    #[error("islands must be ≥ 2 (island resets need a survivor), found {0}")]
    TooFewIslands(usize),
    #[error("{0} must be ≥ 1")]
    NotPositive(&'static str),
    #[error("malformed override '{0}' (expected key=value)")]
    Override(String),
    #[error("{0}")]
    Range(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub islands: usize,
    pub candidates_per_prompt: usize,
    pub max_candidates: usize,
    pub reset_period: usize,
    pub seed: u64,
    pub generator: GeneratorKind,
    pub db_capacity_per_island: usize,
    /// Softmax temperature for within-island parent sampling.
    pub tau_db: f64,
    pub eval_episodes: usize,
    /// Write a checkpoint after every this many candidates (0 disables).
    pub checkpoint_every: usize,
    pub workers: usize,
    pub target_score: Option<f64>,
    pub temperature: f64,
    pub top_p: f64,
    pub repeat_last_n: usize,
    pub max_tokens: usize,
    pub endpoint: Option<String>,
    pub model: String,
    pub max_connections: usize,
    /// Delay before the first retry of a failed remote request; doubles on
    /// each further retry.
    pub retry_backoff_ms: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            islands: 10,
            candidates_per_prompt: 4,
            max_candidates: 10_000,
            reset_period: 2000,
            seed: 0,
            generator: GeneratorKind::Mock,
            db_capacity_per_island: 100,
            tau_db: 1.0,
            eval_episodes: 1,
            checkpoint_every: 500,
            workers: 1,
            target_score: None,
            temperature: 1.0,
            top_p: 0.95,
            repeat_last_n: 15,
            max_tokens: 512,
            endpoint: None,
            model: "default".into(),
            max_connections: 4,
            retry_backoff_ms: 500,
        }
    }
}

fn parse_num<T: FromStr>(key: &str, value: &str, expected: &'static str) -> Result<T, ConfigError> {
    value.parse().map_err(|_| ConfigError::Invalid {
        key: key.to_string(),
        value: value.to_string(),
        expected,
    })
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        const UINT: &str = "a non-negative integer";
        const REAL: &str = "a number";
        let key = key.trim().replace('-', "_");
        let value = value.trim();
        match key.as_str() {
            "islands" => self.islands = parse_num(&key, value, UINT)?,
            "candidates_per_prompt" => self.candidates_per_prompt = parse_num(&key, value, UINT)?,
            "max_candidates" => self.max_candidates = parse_num(&key, value, UINT)?,
            "reset_period" => self.reset_period = parse_num(&key, value, UINT)?,
            "seed" => self.seed = parse_num(&key, value, "a 64-bit unsigned integer")?,
            "generator" => {
                self.generator = value.parse().map_err(|_| ConfigError::Invalid {
                    key: key.clone(),
                    value: value.to_string(),
                    expected: "mock or remote",
                })?
            }
            "db_capacity_per_island" => self.db_capacity_per_island = parse_num(&key, value, UINT)?,
            "tau_db" => self.tau_db = parse_num(&key, value, REAL)?,
            "eval_episodes" => self.eval_episodes = parse_num(&key, value, UINT)?,
            "checkpoint_every" => self.checkpoint_every = parse_num(&key, value, UINT)?,
            "workers" => self.workers = parse_num(&key, value, UINT)?,
            "target_score" => {
                self.target_score = match value {
                    "" | "none" => None,
                    v => Some(parse_num(&key, v, REAL)?),
                }
            }
            "temperature" => self.temperature = parse_num(&key, value, REAL)?,
            "top_p" => self.top_p = parse_num(&key, value, REAL)?,
            "repeat_last_n" => self.repeat_last_n = parse_num(&key, value, UINT)?,
            "max_tokens" => self.max_tokens = parse_num(&key, value, UINT)?,
            "endpoint" => self.endpoint = Some(value.to_string()).filter(|v| !v.is_empty()),
            "model" => self.model = value.to_string(),
            "max_connections" => self.max_connections = parse_num(&key, value, UINT)?,
            "retry_backoff_ms" => self.retry_backoff_ms = parse_num(&key, value, UINT)?,
            _ => return Err(ConfigError::UnknownKey(key)),
        }
        Ok(())
    }

    /// Applies each layer in order over the defaults; later layers win.
    pub fn layered<'a, I>(layers: I) -> Result<RunConfig, ConfigError>
    where
        I: IntoIterator<Item = &'a [(String, String)]>,
    {
        let mut cfg = RunConfig::default();
        for layer in layers {
            for (k, v) in layer {
                cfg.set(k, v)?;
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.islands < 2 {
            return Err(ConfigError::TooFewIslands(self.islands));
        }
        for (name, v) in [
            ("candidates_per_prompt", self.candidates_per_prompt),
            ("reset_period", self.reset_period),
            ("db_capacity_per_island", self.db_capacity_per_island),
            ("eval_episodes", self.eval_episodes),
            ("workers", self.workers),
            ("max_connections", self.max_connections),
        ] {
            if v == 0 {
                return Err(ConfigError::NotPositive(name));
            }
        }
        if !(self.tau_db > 0.0 && self.tau_db.is_finite()) {
            return Err(ConfigError::Range("tau_db must be a positive number".into()));
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(ConfigError::Range("temperature must be > 0".into()));
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return Err(ConfigError::Range("top_p must lie in (0, 1]".into()));
        }
        Ok(())
    }

    /// Stable hash of the settings that affect search results.
    pub fn hash(&self) -> u64 {
        let mut fields: BTreeMap<&str, String> = BTreeMap::new();
        fields.insert("islands", self.islands.to_string());
        fields.insert("candidates_per_prompt", self.candidates_per_prompt.to_string());
        fields.insert("reset_period", self.reset_period.to_string());
        fields.insert("seed", self.seed.to_string());
        fields.insert("generator", self.generator.to_string());
        fields.insert("db_capacity_per_island", self.db_capacity_per_island.to_string());
        fields.insert("tau_db", format!("{:?}", self.tau_db));
        fields.insert("eval_episodes", self.eval_episodes.to_string());
        let text: Vec<String> = fields.iter().map(|(k, v)| format!("{k}={v}")).collect();
        crate::seed::fnv1a(text.join(";").as_bytes())
    }
}

/// Reads `key = value` lines; an optional `[run]` header is accepted, and in a
/// full spec file only the `[run]` section is used.
pub fn read_config_file(path: &Path) -> Result<Vec<(String, String)>, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })?;
    let has_sections = text.lines().any(|l| {
        let t = l.trim();
        t.starts_with('[') && t.ends_with(']')
    });
    let body = if has_sections {
        text
    } else {
        format!("[run]\n{text}")
    };
    let sections = split_sections(&body).map_err(|e| ConfigError::Io {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })?;
    Ok(sections.run.into_iter().map(|(_, k, v)| (k, v)).collect())
}

pub fn parse_override(s: &str) -> Result<(String, String), ConfigError> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| ConfigError::Override(s.to_string()))?;
    Ok((k.trim().to_string(), v.trim().to_string()))
}

/// Defaults, then the optional file, then `overrides`.
pub fn load_run_config(
    path: Option<&Path>,
    overrides: &[(String, String)],
) -> Result<RunConfig, ConfigError> {
    let file = match path {
        Some(p) => read_config_file(p)?,
        None => Vec::new(),
    };
    RunConfig::layered([file.as_slice(), overrides])
}
