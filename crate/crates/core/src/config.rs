//! Flat `key = value` run configuration.
//!
//! Blank lines and lines starting with `#` are ignored. Unknown keys and
//! unparsable values are errors; missing keys keep their defaults.

use std::fmt::Write as _;
use std::str::FromStr;

use thiserror::Error;

use crate::estimators::WeightRule;
use crate::objective::{TrainConfig, WeightConfig};
use crate::reward::RewardConfig;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: invalid value `{value}` for `{key}`")]
    InvalidValue {
        line: usize,
        key: String,
        value: String,
    },
    #[error("{0}")]
    Invalid(String),
}

/// Toy environment used by `simulate`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SimEnv {
    /// One context, four steps with heterogeneous β.
    Heterogeneous,
    /// Two contexts, two steps, vocabulary 3.
    Enumerable,
}

impl SimEnv {
    pub fn as_str(self) -> &'static str {
        match self {
            SimEnv::Heterogeneous => "heterogeneous",
            SimEnv::Enumerable => "enumerable",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "heterogeneous" => Some(SimEnv::Heterogeneous),
            "enumerable" => Some(SimEnv::Enumerable),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub reward: RewardConfig,
    pub train: TrainConfig,
    /// Warm-start logit bias on reference format pieces.
    pub warm_format_bias: f64,
    /// Warm-start logit bias on reference content pieces.
    pub warm_content_bias: f64,
    pub sim_env: SimEnv,
    pub sim_groups: usize,
    pub sim_group_size: usize,
    pub bootstrap_resamples: usize,
    pub confidence: f64,
    pub beta_samples: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            reward: RewardConfig::default(),
            train: TrainConfig::default(),
            warm_format_bias: 4.0,
            warm_content_bias: 3.0,
            sim_env: SimEnv::Heterogeneous,
            sim_groups: 10_000,
            sim_group_size: 8,
            bootstrap_resamples: 1000,
            confidence: 0.95,
            beta_samples: 20_000,
        }
    }
}

fn parse_bool(s: &str) -> Option<bool> {
    match s {
        "true" | "1" | "yes" => Some(true),
        "false" | "0" | "no" => Some(false),
        _ => None,
    }
}

fn num<T: FromStr>(s: &str) -> Option<T> {
    s.parse().ok()
}

impl RunConfig {
    pub fn weights(&self) -> &WeightConfig {
        &self.train.weights
    }

    /// Applies one `key = value` assignment. Returns `None` for an unknown key
    /// and `Some(false)` for a bad value.
    fn set(&mut self, key: &str, value: &str) -> Option<bool> {
        let w = &mut self.train.weights;
        let ok = match key {
            "beta_acc" => num(value).map(|v| self.reward.beta_acc = v),
            "beta_fmt" => num(value).map(|v| self.reward.beta_fmt = v),
            "dynamic_scaling" => parse_bool(value).map(|v| self.reward.dynamic_scaling = v),
            "w_min" => num(value).map(|v| w.w_min = v),
            "w_max" => num(value).map(|v| w.w_max = v),
            "alpha_f" => num(value).map(|v| w.alpha_f = v),
            "alpha_p" => num(value).map(|v| w.alpha_p = v),
            "alpha_t" => num(value).map(|v| w.alpha_t = v),
            "epsilon_clip" => num(value).map(|v| w.epsilon_clip = v),
            "delta" => num(value).map(|v| w.delta = v),
            "delta_w" => num(value).map(|v| w.delta_w = v),
            "kl_coeff" => num(value).map(|v| w.kl_coeff = v),
            "weight_rule" => WeightRule::parse(value).map(|v| w.rule = v),
            "global_normalization" => parse_bool(value).map(|v| w.global_normalization = v),
            "learning_rate" => num(value).map(|v| self.train.learning_rate = v),
            "group_size" => num(value).map(|v| self.train.group_size = v),
            "inner_epochs" => num(value).map(|v| self.train.inner_epochs = v),
            "init_rollouts" => num(value).map(|v| self.train.init_rollouts = v),
            "warm_format_bias" => num(value).map(|v| self.warm_format_bias = v),
            "warm_content_bias" => num(value).map(|v| self.warm_content_bias = v),
            "sim_env" => SimEnv::parse(value).map(|v| self.sim_env = v),
            "sim_groups" => num(value).map(|v| self.sim_groups = v),
            "sim_group_size" => num(value).map(|v| self.sim_group_size = v),
            "bootstrap_resamples" => num(value).map(|v| self.bootstrap_resamples = v),
            "confidence" => num(value).map(|v| self.confidence = v),
            "beta_samples" => num(value).map(|v| self.beta_samples = v),
            _ => return None,
        };
        Some(ok.is_some())
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or(ConfigError::Syntax { line: i + 1 })?;
            let (key, value) = (key.trim(), value.trim());
            match cfg.set(key, value) {
                None => {
                    return Err(ConfigError::UnknownKey {
                        line: i + 1,
                        key: key.to_string(),
                    })
                }
                Some(false) => {
                    return Err(ConfigError::InvalidValue {
                        line: i + 1,
                        key: key.to_string(),
                        value: value.to_string(),
                    })
                }
                Some(true) => {}
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.reward.validate().map_err(ConfigError::Invalid)?;
        self.train
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if self.sim_group_size < 2
            || self.sim_groups < 100
            || self.bootstrap_resamples == 0
            || self.beta_samples == 0
        {
            return Err(ConfigError::Invalid(
                "need sim_group_size >= 2, sim_groups >= 100, bootstrap_resamples >= 1, beta_samples >= 1".into(),
            ));
        }
        if !(self.confidence > 0.0 && self.confidence < 1.0) {
            return Err(ConfigError::Invalid("confidence must lie in (0, 1)".into()));
        }
        Ok(())
    }

    /// Every key with its current value, in a form [`RunConfig::parse`] reads
    /// back.
    pub fn dump(&self) -> String {
        let w = &self.train.weights;
        let mut out = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        kv("beta_acc", self.reward.beta_acc.to_string());
        kv("beta_fmt", self.reward.beta_fmt.to_string());
        kv("dynamic_scaling", self.reward.dynamic_scaling.to_string());
        kv("w_min", w.w_min.to_string());
        kv("w_max", w.w_max.to_string());
        kv("alpha_f", w.alpha_f.to_string());
        kv("alpha_p", w.alpha_p.to_string());
        kv("alpha_t", w.alpha_t.to_string());
        kv("epsilon_clip", w.epsilon_clip.to_string());
        kv("delta", w.delta.to_string());
        kv("delta_w", w.delta_w.to_string());
        kv("kl_coeff", w.kl_coeff.to_string());
        kv("weight_rule", w.rule.as_str().to_string());
        kv("global_normalization", w.global_normalization.to_string());
        kv("learning_rate", self.train.learning_rate.to_string());
        kv("group_size", self.train.group_size.to_string());
        kv("inner_epochs", self.train.inner_epochs.to_string());
        kv("init_rollouts", self.train.init_rollouts.to_string());
        kv("warm_format_bias", self.warm_format_bias.to_string());
        kv("warm_content_bias", self.warm_content_bias.to_string());
        kv("sim_env", self.sim_env.as_str().to_string());
        kv("sim_groups", self.sim_groups.to_string());
        kv("sim_group_size", self.sim_group_size.to_string());
        kv("bootstrap_resamples", self.bootstrap_resamples.to_string());
        kv("confidence", self.confidence.to_string());
        kv("beta_samples", self.beta_samples.to_string());
        out
    }
}
