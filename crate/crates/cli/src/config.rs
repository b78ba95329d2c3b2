//! Experiment config file. Every key is optional; command-line flags win.
//!
//! ```toml
//! [synth]
//! sites = 20
//! per_site = 40
//! unmonitored = 200
//!
//! [experiment]
//! feature_len = 256
//! grid = [0.0, 0.5, 1.0]
//! defenses = ["rpd-large", "lad-insert"]
//!
//! [classifier]
//! kind = "cnn"
//! channels = [8, 16, 16, 32]
//!
//! [train]
//! epochs = 10
//! ```

use std::path::Path;

use anyhow::Context;
use serde::Deserialize;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    #[serde(default)]
    pub synth: SynthSection,
    #[serde(default)]
    pub experiment: ExperimentSection,
    #[serde(default)]
    pub classifier: ClassifierSection,
    #[serde(default)]
    pub train: TrainSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSection {
    pub sites: Option<usize>,
    pub per_site: Option<usize>,
    pub min_len: Option<usize>,
    pub max_len: Option<usize>,
    pub signature_len: Option<usize>,
    pub drop_prob: Option<f64>,
    pub resize_prob: Option<f64>,
    pub unmonitored: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    pub feature_len: Option<usize>,
    pub attack_x: Option<usize>,
    pub defense_x: Option<usize>,
    pub split_min: Option<u32>,
    pub header_bytes: Option<u64>,
    pub grid: Option<Vec<f64>>,
    pub split_ratio: Option<f64>,
    pub defenses: Option<Vec<String>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassifierSection {
    pub kind: Option<String>,
    pub k: Option<usize>,
    pub channels: Option<Vec<usize>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub learning_rate: Option<f64>,
    pub beta1: Option<f64>,
    pub beta2: Option<f64>,
    pub epsilon: Option<f64>,
}

/// Marks errors caused by bad user input (exit code 1).
#[derive(Debug)]
pub struct Invalid(pub String);

impl std::fmt::Display for Invalid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Invalid {}

pub fn invalid(msg: impl Into<String>) -> anyhow::Error {
    Invalid(msg.into()).into()
}

pub fn load(path: Option<&Path>) -> anyhow::Result<FileConfig> {
    let Some(path) = path else { return Ok(FileConfig::default()) };
    let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    toml::from_str(&text).map_err(|e| invalid(format!("config {}: {e}", path.display())))
}
