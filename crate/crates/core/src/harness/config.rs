//! Training configuration and its `key = value` file form.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ModelConfig, Slicing, Variant};

pub const DEFAULT_LEARNING_RATE: f64 = 1e-4;
pub const DEFAULT_L2_FACTOR: f64 = 0.0005;
pub const DEFAULT_BATCH_SIZE: usize = 32;
pub const DEFAULT_EPOCHS: usize = 30;

/// Every key accepted in a config file or as an override.
pub const CONFIG_KEYS: [&str; 9] = [
    "learning_rate",
    "l2_factor",
    "batch_size",
    "epochs",
    "seed",
    "variant",
    "dilation",
    "slice_length",
    "slice_stride",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub l2_factor: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub model: ModelConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: DEFAULT_LEARNING_RATE,
            l2_factor: DEFAULT_L2_FACTOR,
            batch_size: DEFAULT_BATCH_SIZE,
            epochs: DEFAULT_EPOCHS,
            seed: 0,
            model: ModelConfig::sccnn_rnn(),
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::ExperimentConfig(format!("invalid value {value:?} for {key}")))
}

impl TrainConfig {
    pub fn with_model(model: ModelConfig) -> Self {
        TrainConfig {
            model,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || !(self.l2_factor > 0.0) {
            return Err(Error::ExperimentConfig(
                "learning_rate and l2_factor must be positive".into(),
            ));
        }
        if self.batch_size == 0 || self.batch_size % 2 != 0 {
            return Err(Error::ExperimentConfig(format!(
                "batch_size must be even and positive, got {}",
                self.batch_size
            )));
        }
        self.model.validate()
    }

    /// Applies one `key = value` setting. Switching `variant` resets the
    /// variant-specific fields to their defaults.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key.trim() {
            "learning_rate" => self.learning_rate = parse(key, value)?,
            "l2_factor" => self.l2_factor = parse(key, value)?,
            "batch_size" => self.batch_size = parse(key, value)?,
            "epochs" => self.epochs = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "variant" => {
                let v: Variant = value.parse()?;
                if v != self.model.variant {
                    self.model = ModelConfig::new(v);
                }
            }
            "dilation" => self.model.dilation = Some(parse(key, value)?),
            "slice_length" | "slice_stride" => {
                let n: usize = parse(key, value)?;
                let s = self.model.slicing.get_or_insert(Slicing { length: n, stride: n });
                if key.trim() == "slice_length" {
                    s.length = n;
                } else {
                    s.stride = n;
                }
            }
            other => {
                return Err(Error::ExperimentConfig(format!(
                    "unknown config key {other:?} (known: {})",
                    CONFIG_KEYS.join(", ")
                )))
            }
        }
        Ok(())
    }

    /// Applies a `key=value` override string.
    pub fn apply_override(&mut self, kv: &str) -> Result<()> {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::ExperimentConfig(format!("override {kv:?} is not key=value")))?;
        self.set(k, v)
    }

    /// Parses a config file body over the defaults. Blank lines and lines
    /// starting with `#` are ignored.
    pub fn parse_str(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::ExperimentConfig(format!("line {}: expected key = value", n + 1))
            })?;
            cfg.set(k, v)?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::load(path, e.to_string()))?;
        Self::parse_str(&text)
    }

    /// The config as `key = value` lines, readable by [`parse_str`](Self::parse_str).
    pub fn to_kv_string(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "learning_rate = {}", self.learning_rate);
        let _ = writeln!(s, "l2_factor = {}", self.l2_factor);
        let _ = writeln!(s, "batch_size = {}", self.batch_size);
        let _ = writeln!(s, "epochs = {}", self.epochs);
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "variant = {}", self.model.variant);
        if let Some(d) = self.model.dilation {
            let _ = writeln!(s, "dilation = {d}");
        }
        if let Some(sl) = self.model.slicing {
            let _ = writeln!(s, "slice_length = {}", sl.length);
            let _ = writeln!(s, "slice_stride = {}", sl.stride);
        }
        s
    }
}
