//! Layered settings. Each key resolves from, in order of precedence:
//! command-line flags, `TOPOFORGE_<KEY>` environment variables, a
//! `key = value` config file, and built-in defaults.

use std::collections::BTreeMap;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use topoforge::fem::LinearSolver;
use topoforge::{Backend, GenerationParams, Grid, SolverConfig};

pub const ENV_PREFIX: &str = "TOPOFORGE_";

/// Every recognised key. Environment variables use the upper-cased key.
pub const KEYS: &[&str] = &[
    "vf",
    "load_angle",
    "strength",
    "batch",
    "seed",
    "backend",
    "remote_url",
    "remote_timeout_ms",
    "out",
    "grid",
    "host",
    "port",
    "threshold",
    "static_dir",
    "workers",
    "max_iters",
    "rmin",
    "solver",
];

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("config line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("invalid value `{value}` for `{key}`: {reason}")]
    Value {
        key: String,
        value: String,
        reason: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    #[default]
    Simp,
    Remote,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub vf: f64,
    pub load_angle: f64,
    pub strength: f64,
    pub batch: usize,
    pub seed: Option<u64>,
    pub backend: BackendKind,
    pub remote_url: Option<String>,
    pub remote_timeout_ms: u64,
    /// Run directory for `solve`, output root for `serve`.
    pub out: Option<PathBuf>,
    /// `None` when no layer set it; commands pick their own fallback.
    pub grid: Option<Grid>,
    pub host: String,
    pub port: u16,
    pub threshold: f64,
    pub static_dir: Option<PathBuf>,
    pub workers: usize,
    pub max_iters: usize,
    pub rmin: f64,
    pub solver: LinearSolver,
}

/// Parse `key = value` lines; blank lines and `#` comments are skipped.
pub fn parse_config_file(text: &str) -> Result<BTreeMap<String, String>, ConfigError> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or(ConfigError::Syntax { line: i + 1 })?;
        let key = k.trim().to_ascii_lowercase();
        if !KEYS.contains(&key.as_str()) {
            return Err(ConfigError::UnknownKey(key));
        }
        out.insert(key, v.trim().trim_matches('"').to_string());
    }
    Ok(out)
}

/// Values of recognised `TOPOFORGE_*` variables, keyed by config key.
pub fn from_env(vars: impl IntoIterator<Item = (String, String)>) -> BTreeMap<String, String> {
    vars.into_iter()
        .filter_map(|(k, v)| {
            let key = k.strip_prefix(ENV_PREFIX)?.to_ascii_lowercase();
            KEYS.contains(&key.as_str()).then_some((key, v))
        })
        .collect()
}

impl Settings {
    /// Merge layers, lowest precedence first, and parse the result.
    pub fn resolve(layers: &[BTreeMap<String, String>]) -> Result<Settings, ConfigError> {
        let mut merged = BTreeMap::new();
        for layer in layers {
            for (k, v) in layer {
                if !KEYS.contains(&k.as_str()) {
                    return Err(ConfigError::UnknownKey(k.clone()));
                }
                merged.insert(k.as_str(), v.as_str());
            }
        }
        let get = |k: &str| merged.get(k).copied();
        Ok(Settings {
            vf: parse_or(get("vf"), "vf", 0.2)?,
            load_angle: parse_or(get("load_angle"), "load_angle", 270.0)?,
            strength: parse_or(
                get("strength"),
                "strength",
                topoforge::pipeline::DEFAULT_STRENGTH,
            )?,
            batch: parse_or(get("batch"), "batch", 1)?,
            seed: get("seed").map(|v| parse(v, "seed")).transpose()?,
            backend: match get("backend").unwrap_or("simp") {
                "simp" => BackendKind::Simp,
                "remote" => BackendKind::Remote,
                other => return Err(invalid("backend", other, "expected simp or remote")),
            },
            remote_url: get("remote_url").map(str::to_string),
            remote_timeout_ms: parse_or(get("remote_timeout_ms"), "remote_timeout_ms", 120_000)?,
            out: get("out").map(PathBuf::from),
            grid: get("grid").map(|v| parse(v, "grid")).transpose()?,
            host: get("host").unwrap_or("127.0.0.1").to_string(),
            port: parse_or(get("port"), "port", 8080)?,
            threshold: parse_or(
                get("threshold"),
                "threshold",
                topoforge::pipeline::DEFAULT_THRESHOLD,
            )?,
            static_dir: get("static_dir").map(PathBuf::from),
            workers: match get("workers") {
                Some(v) => parse(v, "workers")?,
                None => std::thread::available_parallelism().map_or(1, |n| n.get()),
            },
            max_iters: parse_or(get("max_iters"), "max_iters", 200)?,
            rmin: parse_or(get("rmin"), "rmin", 2.0)?,
            solver: match get("solver").unwrap_or("direct") {
                "direct" => LinearSolver::Direct,
                "cg" => LinearSolver::ConjugateGradient,
                other => return Err(invalid("solver", other, "expected direct or cg")),
            },
        })
    }

    /// Generation parameters shared by `solve` and the job service.
    pub fn generation_params(&self) -> Result<GenerationParams, ConfigError> {
        let backend = match self.backend {
            BackendKind::Simp => Backend::Simp,
            BackendKind::Remote => Backend::Remote {
                url: self
                    .remote_url
                    .clone()
                    .ok_or_else(|| invalid("remote_url", "", "required for the remote backend"))?,
                timeout_ms: self.remote_timeout_ms,
            },
        };
        Ok(GenerationParams {
            volume_fraction: Some(self.vf),
            load_angle_deg: self.load_angle,
            strength: self.strength,
            backend,
            batch_count: self.batch,
            seed: self.seed,
            solver: SolverConfig {
                rmin: self.rmin,
                max_iters: self.max_iters,
                solver: self.solver,
                ..SolverConfig::default()
            },
        })
    }
}

fn invalid(key: &str, value: &str, reason: impl ToString) -> ConfigError {
    ConfigError::Value {
        key: key.to_string(),
        value: value.to_string(),
        reason: reason.to_string(),
    }
}

fn parse<T: std::str::FromStr>(value: &str, key: &str) -> Result<T, ConfigError>
where
    T::Err: ToString,
{
    value
        .trim()
        .parse()
        .map_err(|e: T::Err| invalid(key, value, e))
}

fn parse_or<T: std::str::FromStr>(
    value: Option<&str>,
    key: &str,
    default: T,
) -> Result<T, ConfigError>
where
    T::Err: ToString,
{
    value.map_or(Ok(default), |v| parse(v, key))
}
