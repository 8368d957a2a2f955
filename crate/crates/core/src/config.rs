//! Flat key/value run configuration.
//!
//! Loaded from a TOML file of top-level keys. Any key can be overridden by an
//! environment variable `RSLICER_<KEY>` (key uppercased); unknown keys are an
//! error and every value is validated after overrides are applied.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::{BackboneConfig, RemoteConfig};
use crate::fusion::TrainConfig;
use crate::synthgen::{default_scenario, ScenarioConfig};
use crate::tasks::TaskConfig;
use crate::telemetry::TelemetryError;

pub const ENV_PREFIX: &str = "RSLICER_";

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("cannot read config {path}: {msg}")]
    Read { path: String, msg: String },
    #[error("invalid config: {0}")]
    Parse(String),
    #[error("invalid value for {key}: {msg}")]
    Invalid { key: &'static str, msg: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub window_len_us: u64,
    pub stride_us: u64,

    /// `builtin_hash` or `remote`.
    pub backbone: String,
    pub backbone_dim: usize,
    pub endpoint: String,
    pub remote_model: String,
    pub timeout_ms: u64,
    pub retry_on_timeout: bool,
    pub max_in_flight: usize,
    pub remote_batch_size: usize,

    pub temperature: f64,
    pub margin: f64,
    pub max_similarity: f64,
    pub lambda_modal: f64,
    pub lambda_temp: f64,
    pub lambda_anom: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub state_dim: usize,
    pub hidden_dim: usize,

    pub k_min: usize,
    pub k_max: usize,
    pub min_samples: usize,
    pub quantile: f64,
    /// Leading share of windows (time order) used for tuning.
    pub train_fraction: f64,

    pub n_regimes: u32,
    pub n_faults: u32,
    /// Directory that stages write into when `--out` is not given.
    pub out_dir: String,

    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let t = TrainConfig::default();
        let task = TaskConfig::default();
        RunConfig {
            window_len_us: 60_000_000,
            stride_us: 30_000_000,
            backbone: "builtin_hash".into(),
            backbone_dim: 1024,
            endpoint: String::new(),
            remote_model: String::new(),
            timeout_ms: 30_000,
            retry_on_timeout: true,
            max_in_flight: 4,
            remote_batch_size: 32,
            temperature: t.temperature,
            margin: t.margin,
            max_similarity: t.max_similarity,
            lambda_modal: t.lambda_modal,
            lambda_temp: t.lambda_temp,
            lambda_anom: t.lambda_anom,
            learning_rate: t.learning_rate,
            epochs: t.epochs,
            batch_size: t.batch_size,
            state_dim: t.state_dim,
            hidden_dim: t.hidden_dim,
            k_min: 2,
            k_max: 6,
            min_samples: task.min_samples,
            quantile: task.quantile,
            train_fraction: 0.7,
            n_regimes: 3,
            n_faults: 12,
            out_dir: ".".into(),
            seed: 0,
        }
    }
}

impl RunConfig {
    /// Parses TOML text, applies `env` overrides and validates.
    pub fn from_toml_with_env(
        text: &str,
        env: impl IntoIterator<Item = (String, String)>,
    ) -> Result<Self, ConfigError> {
        let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| ConfigError::Parse(e.message().to_string()))?;
        let known = known_keys();
        for (name, raw) in env {
            let Some(key) = name.strip_prefix(ENV_PREFIX) else { continue };
            let key = key.to_ascii_lowercase();
            if !known.contains(&key) {
                return Err(ConfigError::Parse(format!("unknown override {name}")));
            }
            table.insert(key, env_value(&raw));
        }
        let cfg: RunConfig = table
            .try_into()
            .map_err(|e: toml::de::Error| ConfigError::Parse(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Loads a config file (or the defaults when `path` is `None`) with
    /// overrides from the process environment.
    pub fn load(path: Option<&Path>) -> Result<Self, ConfigError> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p).map_err(|e| ConfigError::Read {
                path: p.display().to_string(),
                msg: e.to_string(),
            })?,
            None => String::new(),
        };
        Self::from_toml_with_env(&text, std::env::vars())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |key: &'static str, msg: &str| Err(ConfigError::Invalid { key, msg: msg.to_string() });
        if self.window_len_us == 0 {
            return invalid("window_len_us", "must be positive");
        }
        if self.stride_us == 0 || self.stride_us > self.window_len_us {
            return invalid("stride_us", "must lie in (0, window_len_us]");
        }
        crate::embedding::Backbone::from_config(&self.backbone_config()?)
            .map_err(|e| ConfigError::Invalid { key: "backbone", msg: e.to_string() })?;
        if self.backbone == "remote" && (self.max_in_flight == 0 || self.remote_batch_size == 0) {
            return invalid("max_in_flight", "remote concurrency and batch size must be positive");
        }
        self.train_config()
            .validate()
            .map_err(|e| ConfigError::Invalid { key: "train", msg: e.to_string() })?;
        if self.k_min == 0 || self.k_max < self.k_min {
            return invalid("k_min", "need 1 <= k_min <= k_max");
        }
        self.task_config()
            .validate()
            .map_err(|e| ConfigError::Invalid { key: "quantile", msg: e.to_string() })?;
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return invalid("train_fraction", "must lie in (0, 1)");
        }
        if self.n_regimes == 0 {
            return invalid("n_regimes", "must be at least 1");
        }
        Ok(())
    }

    pub fn backbone_config(&self) -> Result<BackboneConfig, ConfigError> {
        match self.backbone.as_str() {
            "builtin_hash" => Ok(BackboneConfig::BuiltinHash { dim: self.backbone_dim }),
            "remote" => Ok(BackboneConfig::Remote(RemoteConfig {
                endpoint: self.endpoint.clone(),
                model: self.remote_model.clone(),
                timeout_ms: self.timeout_ms,
                retry_on_timeout: self.retry_on_timeout,
                max_in_flight: self.max_in_flight,
                batch_size: self.remote_batch_size,
            })),
            other => Err(ConfigError::Invalid {
                key: "backbone",
                msg: format!("unknown kind {other:?}"),
            }),
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            temperature: self.temperature,
            margin: self.margin,
            max_similarity: self.max_similarity,
            lambda_modal: self.lambda_modal,
            lambda_temp: self.lambda_temp,
            lambda_anom: self.lambda_anom,
            learning_rate: self.learning_rate,
            epochs: self.epochs,
            batch_size: self.batch_size,
            state_dim: self.state_dim,
            hidden_dim: self.hidden_dim,
            seed: self.seed,
        }
    }

    pub fn task_config(&self) -> TaskConfig {
        TaskConfig {
            min_samples: self.min_samples,
            quantile: self.quantile,
        }
    }

    pub fn scenario(&self) -> ScenarioConfig {
        default_scenario(self.n_regimes, self.n_faults, self.seed)
    }

    /// Checks the windowing pair the way the telemetry module would.
    pub fn windowing(&self) -> Result<(u64, u64), TelemetryError> {
        if self.window_len_us == 0 || self.stride_us == 0 || self.stride_us > self.window_len_us {
            return Err(TelemetryError::InvalidWindowing {
                window_len_us: self.window_len_us,
                stride_us: self.stride_us,
            });
        }
        Ok((self.window_len_us, self.stride_us))
    }
}

fn known_keys() -> Vec<String> {
    match toml::Table::try_from(RunConfig::default()) {
        Ok(t) => t.keys().cloned().collect(),
        Err(_) => Vec::new(),
    }
}

/// Environment values are read as TOML scalars when they parse as one and as
/// bare strings otherwise, so `RSLICER_EPOCHS=5` and `RSLICER_BACKBONE=remote`
/// both work.
fn env_value(raw: &str) -> toml::Value {
    format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn env(pairs: &[(&str, &str)]) -> Vec<(String, String)> {
        pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
    }

    #[test]
    fn empty_file_gives_defaults() {
        assert_eq!(RunConfig::from_toml_with_env("", env(&[])).unwrap(), RunConfig::default());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(matches!(
            RunConfig::from_toml_with_env("colour = 3", env(&[])),
            Err(ConfigError::Parse(_))
        ));
        assert!(RunConfig::from_toml_with_env("", env(&[("RSLICER_COLOUR", "3")])).is_err());
    }

    #[test]
    fn env_overrides_file() {
        let cfg = RunConfig::from_toml_with_env(
            "epochs = 3\nseed = 1",
            env(&[("RSLICER_EPOCHS", "7"), ("RSLICER_BACKBONE_DIM", "64"), ("HOME", "/x")]),
        )
        .unwrap();
        assert_eq!(cfg.epochs, 7);
        assert_eq!(cfg.backbone_dim, 64);
        assert_eq!(cfg.seed, 1);
    }

    #[test]
    fn values_are_validated() {
        assert!(RunConfig::from_toml_with_env("stride_us = 0", env(&[])).is_err());
        assert!(RunConfig::from_toml_with_env("backbone_dim = 100", env(&[])).is_err());
        assert!(RunConfig::from_toml_with_env("quantile = 1.5", env(&[])).is_err());
        assert!(RunConfig::from_toml_with_env("backbone = \"remote\"", env(&[])).is_err());
        assert!(RunConfig::from_toml_with_env("k_min = 4\nk_max = 3", env(&[])).is_err());
    }
}
