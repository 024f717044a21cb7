//! The run configuration file: a strict TOML schema (unknown keys rejected),
//! semantic validation that reports every offending key at once, and the
//! mapping onto the library's training types.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use aefin::autodiff::AdamConfig;
use aefin::data::{GapPolicy, SynthSpec};
use aefin::error::Error;
use aefin::loss::LossWeights;
use aefin::training::TrainConfig;

/// Where the input series comes from: exactly one of `csv` or `synth`.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    pub csv: Option<PathBuf>,
    pub synth: Option<SynthSection>,
    /// `reject` (default) or `forward-fill`.
    pub gap_policy: Option<String>,
    /// Well-known dataset name; supplies a default for `model.k`.
    pub dataset_name: Option<String>,
}

/// Synthetic-series generator parameters.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSection {
    pub n: usize,
    pub channels: usize,
    #[serde(default)]
    pub trend_slope: f64,
    /// (period, amplitude) pairs.
    #[serde(default)]
    pub seasonal: Vec<(f64, f64)>,
    #[serde(default)]
    pub drift_amplitude: f64,
    #[serde(default)]
    pub noise_std: f64,
    #[serde(default = "default_synth_seed")]
    pub seed: u64,
}

fn default_synth_seed() -> u64 {
    1
}

impl SynthSection {
    pub fn to_spec(&self) -> SynthSpec {
        SynthSpec {
            n: self.n,
            d: self.channels,
            trend_slope: self.trend_slope,
            seasonal: self.seasonal.clone(),
            drift_amplitude: self.drift_amplitude,
            noise_std: self.noise_std,
            seed: self.seed,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    #[serde(default = "default_l_in")]
    pub l_in: usize,
    #[serde(default = "default_l_pred")]
    pub l_pred: usize,
    /// Dominant-bin count; when absent, the dataset-name default applies,
    /// and failing that the threshold rule on the training split.
    pub k: Option<usize>,
    #[serde(default = "default_k_threshold")]
    pub k_threshold: f64,
    #[serde(default = "default_true")]
    pub use_cross_attention: bool,
    #[serde(default = "default_true")]
    pub use_fan: bool,
    #[serde(default)]
    pub use_learned_projection: bool,
}

fn default_l_in() -> usize {
    96
}
fn default_l_pred() -> usize {
    96
}
fn default_k_threshold() -> f64 {
    0.9
}
fn default_true() -> bool {
    true
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection {
            l_in: default_l_in(),
            l_pred: default_l_pred(),
            k: None,
            k_threshold: default_k_threshold(),
            use_cross_attention: true,
            use_fan: true,
            use_learned_projection: false,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default = "default_max_epochs")]
    pub max_epochs: usize,
    #[serde(default = "default_patience")]
    pub patience: usize,
    #[serde(default = "default_lr")]
    pub lr: f64,
    #[serde(default = "default_beta1")]
    pub beta1: f64,
    #[serde(default = "default_beta2")]
    pub beta2: f64,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    /// [stable, non_stable, freq].
    #[serde(default = "default_loss_weights")]
    pub loss_weights: [f64; 3],
    #[serde(default)]
    pub plain_loss: bool,
    /// Also train the no-attention / no-fan / plain-loss variants.
    #[serde(default)]
    pub ablation: bool,
}

fn default_batch_size() -> usize {
    32
}
fn default_max_epochs() -> usize {
    30
}
fn default_patience() -> usize {
    5
}
fn default_lr() -> f64 {
    1e-3
}
fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.999
}
fn default_epsilon() -> f64 {
    1e-8
}
fn default_seeds() -> Vec<u64> {
    vec![1, 2, 3, 4, 5]
}
fn default_loss_weights() -> [f64; 3] {
    [0.5, 0.2, 0.3]
}

impl Default for TrainSection {
    fn default() -> Self {
        TrainSection {
            batch_size: default_batch_size(),
            max_epochs: default_max_epochs(),
            patience: default_patience(),
            lr: default_lr(),
            beta1: default_beta1(),
            beta2: default_beta2(),
            epsilon: default_epsilon(),
            seeds: default_seeds(),
            loss_weights: default_loss_weights(),
            plain_loss: false,
            ablation: false,
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: Option<PathBuf>,
}

/// The whole configuration file.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfigFile {
    #[serde(default)]
    pub data: DataSection,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub output: OutputSection,
}

impl RunConfigFile {
    /// Parses a TOML file; syntax errors and unknown keys are config errors.
    pub fn load(path: &Path) -> Result<Self, Error> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            Error::config(format!("cannot read config {}: {e}", path.display()))
        })?;
        let cfg: RunConfigFile = toml::from_str(&text)
            .map_err(|e| Error::config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Collects every semantic problem before failing, so one round of
    /// edits fixes the file.
    pub fn validate(&self) -> Result<(), Error> {
        let mut problems = Vec::new();
        match (&self.data.csv, &self.data.synth) {
            (Some(_), Some(_)) => {
                problems.push("data.csv and data.synth are mutually exclusive".to_string())
            }
            (None, None) => {
                problems.push("one of data.csv or data.synth is required".to_string())
            }
            _ => {}
        }
        if let Some(p) = &self.data.gap_policy {
            if parse_gap_policy(p).is_none() {
                problems.push(format!(
                    "data.gap_policy must be `reject` or `forward-fill`, got {p:?}"
                ));
            }
        }
        if let Some(s) = &self.data.synth {
            if s.n == 0 {
                problems.push("data.synth.n must be ≥ 1".to_string());
            }
            if s.channels == 0 {
                problems.push("data.synth.channels must be ≥ 1".to_string());
            }
        }
        if self.model.l_in < 2 {
            problems.push(format!("model.l_in must be ≥ 2, got {}", self.model.l_in));
        }
        if self.model.l_pred == 0 {
            problems.push("model.l_pred must be ≥ 1".to_string());
        }
        if self.model.use_fan && self.model.l_pred % 4 != 0 {
            problems.push(format!(
                "model.l_pred must be divisible by 4 while model.use_fan is on, got {}",
                self.model.l_pred
            ));
        }
        if let Some(k) = self.model.k {
            let max_k = self.model.l_in / 2 + 1;
            if k < 1 || k > max_k {
                problems.push(format!(
                    "model.k = {k} outside 1..={max_k} for model.l_in = {}",
                    self.model.l_in
                ));
            }
        }
        if !(self.model.k_threshold > 0.0 && self.model.k_threshold <= 1.0) {
            problems.push(format!(
                "model.k_threshold must lie in (0, 1], got {}",
                self.model.k_threshold
            ));
        }
        if self.train.batch_size == 0 {
            problems.push("train.batch_size must be ≥ 1".to_string());
        }
        if self.train.max_epochs == 0 {
            problems.push("train.max_epochs must be ≥ 1".to_string());
        }
        if !(self.train.lr.is_finite() && self.train.lr > 0.0) {
            problems.push(format!("train.lr must be positive, got {}", self.train.lr));
        }
        for (name, b) in [("train.beta1", self.train.beta1), ("train.beta2", self.train.beta2)] {
            if !(0.0..1.0).contains(&b) {
                problems.push(format!("{name} must lie in [0, 1), got {b}"));
            }
        }
        if !(self.train.epsilon.is_finite() && self.train.epsilon > 0.0) {
            problems.push(format!(
                "train.epsilon must be positive, got {}",
                self.train.epsilon
            ));
        }
        if self.train.seeds.is_empty() {
            problems.push("train.seeds must name at least one seed".to_string());
        }
        for (i, w) in self.train.loss_weights.iter().enumerate() {
            if !(w.is_finite() && *w >= 0.0) {
                problems.push(format!(
                    "train.loss_weights[{i}] must be finite and non-negative, got {w}"
                ));
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::config(problems.join("\n")))
        }
    }

    pub fn gap_policy(&self) -> GapPolicy {
        self.data
            .gap_policy
            .as_deref()
            .and_then(parse_gap_policy)
            .unwrap_or(GapPolicy::Reject)
    }

    /// The library training config (everything except `k`, which may need
    /// the data to resolve).
    pub fn train_config(&self, k: usize) -> TrainConfig {
        TrainConfig {
            l_in: self.model.l_in,
            l_pred: self.model.l_pred,
            k,
            batch_size: self.train.batch_size,
            max_epochs: self.train.max_epochs,
            patience: self.train.patience,
            adam: AdamConfig {
                lr: self.train.lr,
                beta1: self.train.beta1,
                beta2: self.train.beta2,
                epsilon: self.train.epsilon,
            },
            weights: LossWeights {
                stable: self.train.loss_weights[0],
                non_stable: self.train.loss_weights[1],
                freq: self.train.loss_weights[2],
            },
            use_cross_attention: self.model.use_cross_attention,
            use_fan: self.model.use_fan,
            use_learned_projection: self.model.use_learned_projection,
            plain_loss: self.train.plain_loss,
        }
    }
}

pub fn parse_gap_policy(s: &str) -> Option<GapPolicy> {
    match s {
        "reject" => Some(GapPolicy::Reject),
        "forward-fill" => Some(GapPolicy::ForwardFill),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_gets_defaults() {
        let cfg: RunConfigFile = toml::from_str(
            r#"
[data]
csv = "series.csv"
"#,
        )
        .unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.model.l_in, 96);
        assert_eq!(cfg.train.seeds, vec![1, 2, 3, 4, 5]);
        assert_eq!(cfg.train.loss_weights, [0.5, 0.2, 0.3]);
        assert!(cfg.model.k.is_none());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = toml::from_str::<RunConfigFile>(
            r#"
[data]
csv = "x.csv"
[model]
l_inn = 96
"#,
        )
        .unwrap_err();
        assert!(err.to_string().contains("l_inn"), "{err}");
    }

    #[test]
    fn validation_reports_every_problem_at_once() {
        let cfg: RunConfigFile = toml::from_str(
            r#"
[model]
l_in = 1
l_pred = 7
k = 9
k_threshold = 2.0
[train]
batch_size = 0
lr = -0.5
seeds = []
"#,
        )
        .unwrap();
        let msg = cfg.validate().unwrap_err().to_string();
        for needle in [
            "data.csv or data.synth",
            "model.l_in",
            "divisible by 4",
            "model.k = 9",
            "k_threshold",
            "batch_size",
            "train.lr",
            "seeds",
        ] {
            assert!(msg.contains(needle), "missing {needle:?} in:\n{msg}");
        }
    }

    #[test]
    fn exclusive_data_sources() {
        let cfg: RunConfigFile = toml::from_str(
            r#"
[data]
csv = "x.csv"
[data.synth]
n = 100
channels = 1
"#,
        )
        .unwrap();
        let msg = cfg.validate().unwrap_err().to_string();
        assert!(msg.contains("mutually exclusive"), "{msg}");
    }
}
