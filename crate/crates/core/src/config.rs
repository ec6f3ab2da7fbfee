//! Pipeline parameters and the `key = value` config file.

use std::fs;
use std::path::Path;

use crate::classification::MnWeight;
use crate::error::{Result, SbaError};

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    /// Power-normalization exponent of the proposal weights.
    pub alpha: f64,
    /// Power-scaling exponent of the proposal weights.
    pub beta: f64,
    pub n_detectors: usize,
    /// Output dimension M of the PCA-whitening step, capped by data rank.
    pub out_dim: usize,
    pub k_neighbors: usize,
    pub qe_top: usize,
    pub final_norm: bool,
    pub mn_weight: MnWeight,
    pub workers: usize,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            alpha: 2.0,
            beta: 2.0,
            n_detectors: 25,
            out_dim: 4096,
            k_neighbors: 40,
            qe_top: 10,
            final_norm: true,
            mn_weight: MnWeight::Paper,
            workers: 1,
            seed: 0,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("alpha", self.alpha), ("beta", self.beta)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(SbaError::Param(format!("{name} must be positive, got {v}")));
            }
        }
        for (name, v) in [
            ("n_detectors", self.n_detectors),
            ("dim", self.out_dim),
            ("k", self.k_neighbors),
            ("qe_top", self.qe_top),
            ("workers", self.workers),
        ] {
            if v == 0 {
                return Err(SbaError::Param(format!("{name} must be at least 1")));
            }
        }
        Ok(())
    }

    /// Applies `key = value` lines on top of `self`. `#` starts a comment.
    pub fn merge_text(mut self, text: &str) -> Result<Self> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| SbaError::Format(format!("config line {}: expected key = value", lineno + 1)))?;
            self.set(key.trim(), value.trim())
                .map_err(|e| SbaError::Format(format!("config line {}: {e}", lineno + 1)))?;
        }
        self.validate()?;
        Ok(self)
    }

    pub fn merge_file(self, path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| SbaError::io(path.display().to_string(), e))?;
        self.merge_text(&text)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<V: std::str::FromStr>(key: &str, value: &str) -> Result<V> {
            value
                .parse()
                .map_err(|_| SbaError::Param(format!("bad value {value:?} for {key}")))
        }
        match key.replace('-', "_").as_str() {
            "alpha" => self.alpha = num(key, value)?,
            "beta" => self.beta = num(key, value)?,
            "n_detectors" => self.n_detectors = num(key, value)?,
            "dim" | "out_dim" => self.out_dim = num(key, value)?,
            "k" | "k_neighbors" => self.k_neighbors = num(key, value)?,
            "qe_top" => self.qe_top = num(key, value)?,
            "final_norm" => self.final_norm = parse_bool(value)?,
            "mn_weight" => self.mn_weight = value.parse()?,
            "workers" => self.workers = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            other => return Err(SbaError::Param(format!("unknown config key {other:?}"))),
        }
        Ok(())
    }
}

pub fn parse_bool(value: &str) -> Result<bool> {
    match value {
        "true" | "on" | "yes" | "1" => Ok(true),
        "false" | "off" | "no" | "0" => Ok(false),
        other => Err(SbaError::Param(format!("bad boolean {other:?}"))),
    }
}
