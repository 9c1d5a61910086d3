//! Declarative experiment configuration.
//!
//! A run is fully described by one TOML document; every field has a default,
//! and the resolved copy is written into the run directory so any artifact
//! can be regenerated from the run directory alone. CLI flags override keys
//! as `--set section.key=value`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::analysis::CorrelationMode;
use crate::error::{Error, Result};
use crate::nn::{arch, InitScheme, LayerSpec, NetworkSpec};
use crate::optim::{OptimKind, OptimizerSpec};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// `synthetic` (procedural digits), `idx`, or `cifar10`.
    pub dataset: String,
    /// Images file for `idx`, batch file for `cifar10`.
    pub path: String,
    /// Labels file for `idx`.
    pub labels_path: String,
    pub n_train_examples: usize,
    /// Explicit training indices; when empty, the first
    /// `n_train_examples` items with label `train_label` are used.
    pub train_indices: Vec<usize>,
    pub train_label: u8,
    /// Samples per class for the synthetic set.
    pub synthetic_per_class: usize,
    pub image_size: usize,
    pub normalize: bool,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            dataset: "synthetic".into(),
            path: String::new(),
            labels_path: String::new(),
            n_train_examples: 1,
            train_indices: vec![],
            train_label: 7,
            synthetic_per_class: 120,
            image_size: 28,
            normalize: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// `cnn`, `fcn`, `linear_fcn`, or `residual_fcn`.
    pub family: String,
    /// Number of parameterized layers (conv or dense); residual blocks for
    /// `residual_fcn`.
    pub depth: usize,
    pub channels: usize,
    pub hidden_dim: usize,
    pub kernel: usize,
    pub init: InitScheme,
    pub bias: bool,
    /// Freeze everything except the first parameterized layer.
    pub train_bottom_only: bool,
    /// Model seed; 0 derives it from the run seed.
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            family: "cnn".into(),
            depth: 5,
            channels: 32,
            hidden_dim: 2048,
            kernel: 5,
            init: InitScheme::Default,
            bias: true,
            train_bottom_only: false,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub kind: OptimKind,
    pub base_lr: f64,
    pub momentum: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub rms_decay: f64,
    pub total_steps: usize,
    pub milestones: Vec<f64>,
    pub decay_factor: f64,
    /// Stop once the loss drops below this; 0 disables early stopping.
    pub early_stop_loss: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        let s = OptimizerSpec::default();
        OptimizerConfig {
            kind: s.kind,
            base_lr: s.base_lr,
            momentum: s.momentum,
            beta1: s.beta1,
            beta2: s.beta2,
            eps: s.eps,
            rms_decay: s.rms_decay,
            total_steps: s.total_steps,
            milestones: s.milestones,
            decay_factor: s.decay_factor,
            early_stop_loss: 0.0,
        }
    }
}

impl OptimizerConfig {
    pub fn to_spec(&self) -> OptimizerSpec {
        OptimizerSpec {
            kind: self.kind,
            base_lr: self.base_lr,
            momentum: self.momentum,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
            rms_decay: self.rms_decay,
            total_steps: self.total_steps,
            milestones: self.milestones.clone(),
            decay_factor: self.decay_factor,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub rho_grid_points: usize,
    pub samples_per_cell: usize,
    pub correlation: CorrelationMode,
    pub patterns: Vec<String>,
    pub input_sizes: Vec<usize>,
    pub probe_train: usize,
    pub probe_test: usize,
    /// Layers at which the probe classifier runs; empty = every layer.
    pub probe_layers: Vec<usize>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            rho_grid_points: 21,
            samples_per_cell: 16,
            correlation: CorrelationMode::Pearson,
            patterns: vec![
                "blend".into(),
                "gaussian_noise".into(),
                "uniform_noise".into(),
                "checkerboard".into(),
                "h_gradient".into(),
                "v_gradient".into(),
                "solid".into(),
                "centered_square".into(),
                "circle".into(),
            ],
            input_sizes: vec![7, 14, 28, 56, 112],
            probe_train: 1000,
            probe_test: 1000,
            probe_layers: vec![],
        }
    }
}

/// One reproducible experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub out_dir: PathBuf,
    pub data: DataConfig,
    pub model: ModelConfig,
    pub optimizer: OptimizerConfig,
    pub eval: EvalConfig,
}

impl ExperimentConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::io(path.display().to_string(), e))?;
        Self::from_toml(&text)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::invalid("config", e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// Applies `section.key=value` overrides on the TOML representation.
    pub fn with_overrides(&self, overrides: &[String]) -> Result<Self> {
        let mut value: toml::Value =
            toml::from_str(&self.to_toml()).map_err(|e| Error::invalid("config", e.to_string()))?;
        for ov in overrides {
            let (path, raw) = ov.split_once('=').ok_or_else(|| {
                Error::invalid("config override", format!("expected key=value, got `{ov}`"))
            })?;
            let parsed: toml::Value = parse_override_value(raw);
            let mut node = &mut value;
            let parts: Vec<&str> = path.split('.').collect();
            for (i, part) in parts.iter().enumerate() {
                if i + 1 == parts.len() {
                    node.as_table_mut()
                        .ok_or_else(|| {
                            Error::invalid("config override", format!("`{path}` is not a table path"))
                        })?
                        .insert(part.to_string(), parsed.clone());
                } else {
                    node = node
                        .as_table_mut()
                        .and_then(|t| t.get_mut(*part))
                        .ok_or_else(|| {
                            Error::invalid("config override", format!("unknown section `{part}`"))
                        })?;
                }
            }
        }
        let text = toml::to_string(&value).map_err(|e| Error::invalid("config", e.to_string()))?;
        Self::from_toml(&text)
    }

    /// The effective model seed.
    pub fn model_seed(&self) -> u64 {
        if self.model.seed != 0 {
            self.model.seed
        } else {
            self.seed.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(1)
        }
    }

    /// Lowers the model section to a network spec for the given data entry.
    pub fn network_spec(&self, data_channels: usize, flat_dim: usize) -> Result<NetworkSpec> {
        let m = &self.model;
        let mut layers: Vec<LayerSpec> = match m.family.as_str() {
            "cnn" => arch::cnn(m.depth, data_channels, m.channels, m.kernel),
            "fcn" => arch::fcn(m.depth, flat_dim, m.hidden_dim, true),
            "linear_fcn" => arch::fcn(m.depth, flat_dim, m.hidden_dim, false),
            "residual_fcn" => arch::residual_fcn(m.depth, flat_dim),
            other => {
                return Err(Error::Spec(format!(
                    "unknown model family `{other}` (expected cnn|fcn|linear_fcn|residual_fcn)"
                )))
            }
        };
        if !m.bias {
            for l in layers.iter_mut() {
                l.has_bias = false;
            }
        }
        if m.train_bottom_only {
            let mut seen_first = false;
            for l in layers.iter_mut() {
                if l.is_parameterized() {
                    if seen_first {
                        l.trainable = false;
                    }
                    seen_first = true;
                }
            }
        }
        let spec = NetworkSpec::new(layers, m.init, self.model_seed());
        spec.validate()?;
        Ok(spec)
    }
}

fn parse_override_value(raw: &str) -> toml::Value {
    if let Ok(b) = raw.parse::<bool>() {
        return toml::Value::Boolean(b);
    }
    if let Ok(i) = raw.parse::<i64>() {
        return toml::Value::Integer(i);
    }
    if let Ok(f) = raw.parse::<f64>() {
        return toml::Value::Float(f);
    }
    if raw.starts_with('[') {
        if let Ok(v) = toml::from_str::<toml::Value>(&format!("v = {raw}")) {
            if let Some(inner) = v.get("v") {
                return inner.clone();
            }
        }
    }
    toml::Value::String(raw.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let cfg = ExperimentConfig::default();
        let text = cfg.to_toml();
        let back = ExperimentConfig::from_toml(&text).unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn empty_document_uses_defaults() {
        let cfg = ExperimentConfig::from_toml("").unwrap();
        assert_eq!(cfg.optimizer.total_steps, 200_000);
        assert_eq!(cfg.data.n_train_examples, 1);
        assert_eq!(cfg.model.family, "cnn");
    }

    #[test]
    fn overrides_apply() {
        let cfg = ExperimentConfig::default();
        let out = cfg
            .with_overrides(&[
                "model.depth=20".into(),
                "optimizer.base_lr=0.001".into(),
                "data.dataset=idx".into(),
                "seed=9".into(),
                "eval.input_sizes=[7, 28]".into(),
            ])
            .unwrap();
        assert_eq!(out.model.depth, 20);
        assert_eq!(out.optimizer.base_lr, 0.001);
        assert_eq!(out.data.dataset, "idx");
        assert_eq!(out.seed, 9);
        assert_eq!(out.eval.input_sizes, vec![7, 28]);
        assert!(cfg.with_overrides(&["nonsense".into()]).is_err());
        assert!(cfg.with_overrides(&["no.such.section=1".into()]).is_err());
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(ExperimentConfig::from_toml("[model]\nwidth = 3").is_err());
    }

    #[test]
    fn network_spec_lowering() {
        let mut cfg = ExperimentConfig::default();
        cfg.model.depth = 3;
        cfg.model.channels = 8;
        let spec = cfg.network_spec(1, 784).unwrap();
        // conv relu conv relu conv
        assert_eq!(spec.layers.len(), 5);

        cfg.model.family = "fcn".into();
        cfg.model.depth = 2;
        let spec = cfg.network_spec(1, 784).unwrap();
        assert_eq!(spec.layers.len(), 3);

        cfg.model.train_bottom_only = true;
        let spec = cfg.network_spec(1, 784).unwrap();
        assert!(spec.layers[0].trainable);
        assert!(!spec.layers[2].trainable);

        cfg.model.family = "vit".into();
        assert!(cfg.network_spec(1, 784).is_err());
    }

    #[test]
    fn model_seed_derivation() {
        let mut cfg = ExperimentConfig::default();
        cfg.seed = 5;
        let derived = cfg.model_seed();
        cfg.model.seed = 77;
        assert_eq!(cfg.model_seed(), 77);
        assert_ne!(derived, 77);
    }
}
