//! Run configuration: JSON file < explicit overrides, with documented defaults.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Environment variable consulted for the seed when neither a flag nor the
/// config file sets one.
pub const SEED_ENV_VAR: &str = "HYDENSE_SEED";

/// Seed used when nothing else specifies one.
pub const DEFAULT_SEED: u64 = 42;

/// Token-sequence limits and vocabulary cutoff shared by the lexical and
/// dense paths.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TokenizerConfig {
    /// Maximum token count for queries.
    pub max_query_len: usize,
    /// Maximum token count for documents.
    pub max_doc_len: usize,
    /// Minimum corpus frequency for a token to enter the vocabulary.
    pub min_freq: usize,
}

impl Default for TokenizerConfig {
    fn default() -> Self {
        TokenizerConfig {
            max_query_len: 64,
            max_doc_len: 350,
            min_freq: 1,
        }
    }
}

/// BM25 hyperparameters and the candidate cutoff.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Bm25Params {
    /// Document term-frequency saturation.
    pub k1: f64,
    /// Query term-frequency saturation; 0 disables it (h_q == 1).
    pub k2: f64,
    /// Length-normalization strength, in [0, 1].
    pub b: f64,
    /// Scores past this rank are treated as 0; candidates beyond it are
    /// never returned.
    pub top_n: usize,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Bm25Params {
            k1: 1.2,
            k2: 0.0,
            b: 0.75,
            top_n: 1000,
        }
    }
}

impl Bm25Params {
    pub fn validate(&self) -> Result<()> {
        if !(self.k1 >= 0.0 && self.k1.is_finite()) {
            return Err(Error::Config(format!("k1 must be non-negative, got {}", self.k1)));
        }
        if !(self.k2 >= 0.0 && self.k2.is_finite()) {
            return Err(Error::Config(format!("k2 must be non-negative, got {}", self.k2)));
        }
        if !(0.0..=1.0).contains(&self.b) {
            return Err(Error::Config(format!("b must lie in [0, 1], got {}", self.b)));
        }
        if self.top_n == 0 {
            return Err(Error::Config("top_n must be positive".into()));
        }
        Ok(())
    }
}

/// Decoupled-weight-decay adaptive optimizer hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamParams {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub weight_decay: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        AdamParams {
            learning_rate: 2e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            weight_decay: 0.01,
        }
    }
}

/// Everything the training loop needs.
///
/// `switch_interval`, `lambda`, `dropout_rate`, `sim_scale` and the learning
/// rate keep their full-scale values; `batch_size`, `dim`, `total_steps` and
/// `cache_capacity` default to desk-scale settings and are freely
/// overridable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    /// Examples per step.
    pub batch_size: usize,
    /// Steps to run; 0 returns the initial parameters unchanged.
    pub total_steps: u64,
    /// Steps between phase switches.
    pub switch_interval: u64,
    /// Cache queue capacity; 0 disables the cache.
    pub cache_capacity: usize,
    /// Weight of the same-side (dropout-positive) loss term.
    pub lambda: f64,
    /// Dropout rate for the trainable tower's passes.
    pub dropout_rate: f64,
    /// Multiplier applied to cosine similarities inside the loss.
    pub sim_scale: f64,
    /// Single parameter set serving both towers.
    pub weight_sharing: bool,
    /// Embedding dimensionality.
    pub dim: usize,
    /// RNG seed; when absent, `HYDENSE_SEED` then 42 apply.
    pub seed: Option<u64>,
    pub optimizer: AdamParams,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 64,
            total_steps: 2000,
            switch_interval: 100,
            cache_capacity: 4096,
            lambda: 1.0,
            dropout_rate: 0.1,
            sim_scale: 20.0,
            weight_sharing: true,
            dim: 64,
            seed: None,
            optimizer: AdamParams::default(),
        }
    }
}

impl TrainConfig {
    /// Seed after applying the fallback chain (config value, then the
    /// `HYDENSE_SEED` environment variable, then the built-in default).
    pub fn resolved_seed(&self) -> u64 {
        self.seed
            .or_else(|| {
                std::env::var(SEED_ENV_VAR)
                    .ok()
                    .and_then(|v| v.parse().ok())
            })
            .unwrap_or(DEFAULT_SEED)
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if self.switch_interval == 0 {
            return Err(Error::Config("switch_interval must be positive".into()));
        }
        if self.lambda < 0.0 || !self.lambda.is_finite() {
            return Err(Error::Config(format!(
                "lambda must be non-negative, got {}",
                self.lambda
            )));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::Config(format!(
                "dropout_rate must lie in [0, 1), got {}",
                self.dropout_rate
            )));
        }
        if self.dim < 2 {
            return Err(Error::Config(format!("dim must be at least 2, got {}", self.dim)));
        }
        if !(self.sim_scale.is_finite() && self.sim_scale > 0.0) {
            return Err(Error::Config(format!(
                "sim_scale must be positive, got {}",
                self.sim_scale
            )));
        }
        Ok(())
    }
}

/// Top-level configuration: tokenizer limits, BM25 parameters, training
/// settings. Unknown keys are rejected so typos cannot silently fall back to
/// defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub tokenizer: TokenizerConfig,
    pub bm25: Bm25Params,
    pub train: TrainConfig,
}

impl RunConfig {
    /// Parse a JSON config file. Missing keys take their defaults; unknown
    /// keys are an error.
    pub fn from_json_file(path: &Path) -> Result<RunConfig> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<RunConfig> {
        let config: RunConfig =
            serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.tokenizer.min_freq < 1 {
            return Err(Error::Config("min_freq must be at least 1".into()));
        }
        if self.tokenizer.max_query_len == 0 || self.tokenizer.max_doc_len == 0 {
            return Err(Error::Config("token length limits must be positive".into()));
        }
        self.bm25.validate()?;
        self.train.validate()
    }

    /// Serialize the fully resolved configuration (seed fallback applied).
    pub fn to_resolved_json(&self) -> String {
        let mut resolved = self.clone();
        resolved.train.seed = Some(resolved.train.resolved_seed());
        serde_json::to_string_pretty(&resolved).expect("config serializes")
    }
}
