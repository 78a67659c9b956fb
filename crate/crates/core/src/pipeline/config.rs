//! Run configuration: a strict JSON schema with per-dataset defaults.

use crate::classifier::Arch;
use crate::error::{Error, Result};
use crate::synth::ScenarioCase;
use crate::topology_debias::AblationTag;
use serde::{Deserialize, Serialize};
use std::str::FromStr;

/// Where the graph comes from.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum DatasetSpec {
    /// Three-file CSV schema on disk.
    Csv {
        features: String,
        edges: String,
        labels: String,
        sensitive_columns: Vec<String>,
    },
    /// Generated scenario case.
    Synth {
        case: String,
        #[serde(default)]
        data_seed: u64,
        /// Logit gain of the synthetic label model.
        #[serde(default = "default_label_gain")]
        label_gain: f64,
    },
}

/// Feature normalization applied after loading.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Normalize {
    #[default]
    Zscore,
    /// Per-column min-max to [-1, 1].
    Minmax,
    None,
}

/// Classifier settings as configured (the per-run seed is added later).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClassifierSettings {
    pub arch: Arch,
    pub hidden: usize,
    pub dropout: f64,
    pub epochs: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub patience: Option<usize>,
}

impl Default for ClassifierSettings {
    fn default() -> Self {
        ClassifierSettings {
            arch: Arch::Gcn,
            hidden: 16,
            dropout: 0.2,
            epochs: 1000,
            lr: 0.01,
            weight_decay: 1e-5,
            patience: None,
        }
    }
}

/// Stratified split ratios plus the seed fixing the node assignment.
/// One split is drawn per run battery; training seeds vary per repetition.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitSettings {
    pub train: f64,
    pub val: f64,
    pub test: f64,
    pub seed: u64,
}

impl Default for SplitSettings {
    fn default() -> Self {
        SplitSettings {
            train: 0.5,
            val: 0.25,
            test: 0.25,
            seed: 42,
        }
    }
}

/// Full batch-run configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: DatasetSpec,
    #[serde(default)]
    pub normalize: Normalize,
    /// Pre-masking distributed ratio.
    #[serde(default = "default_r")]
    pub r: f64,
    /// Pre-masking sensitive threshold.
    #[serde(default = "default_r_s")]
    pub r_s: f64,
    /// L1 sparsity coefficient of the reconstruction weights.
    #[serde(default = "default_lambda1")]
    pub lambda1: f64,
    /// Distance-covariance coefficient in feature debiasing.
    #[serde(default = "default_one")]
    pub lambda2: f64,
    /// Adversarial coefficient in feature debiasing.
    #[serde(default = "default_lambda3")]
    pub lambda3: f64,
    /// Distance-covariance coefficient in topology debiasing.
    #[serde(default = "default_one")]
    pub lambda4: f64,
    /// Edge pruning threshold on squashed weights.
    #[serde(default = "default_r_p")]
    pub r_p: f64,
    #[serde(default = "default_feature_epochs")]
    pub feature_epochs: usize,
    #[serde(default = "default_topology_epochs")]
    pub topology_epochs: usize,
    #[serde(default = "default_debias_lr")]
    pub debias_lr: f64,
    #[serde(default = "default_weight_decay")]
    pub debias_weight_decay: f64,
    #[serde(default)]
    pub classifier: ClassifierSettings,
    #[serde(default)]
    pub split: SplitSettings,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_attack_p")]
    pub attack_p: Vec<f64>,
    /// Attack training epochs.
    #[serde(default = "default_topology_epochs")]
    pub attack_epochs: usize,
    /// Optional ablation tag (`w/o-msk`, `w/o-re`, `w/o-fe`, `w/o-to`).
    #[serde(default)]
    pub ablation: Option<String>,
}

fn default_r() -> f64 {
    0.2
}
fn default_label_gain() -> f64 {
    1.0
}
fn default_r_s() -> f64 {
    0.7
}
fn default_lambda1() -> f64 {
    1e-3
}
fn default_lambda3() -> f64 {
    0.02
}
fn default_one() -> f64 {
    1.0
}
fn default_r_p() -> f64 {
    0.65
}
fn default_feature_epochs() -> usize {
    500
}
fn default_topology_epochs() -> usize {
    1000
}
fn default_debias_lr() -> f64 {
    1e-3
}
fn default_weight_decay() -> f64 {
    1e-5
}
fn default_seeds() -> Vec<u64> {
    (0..10).collect()
}
fn default_attack_p() -> Vec<f64> {
    crate::attack::DEFAULT_KNOWN_FRACTIONS.to_vec()
}

impl RunConfig {
    pub fn from_json(json: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(json)
            .map_err(|e| Error::Config(format!("bad config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.r > 0.0 && self.r < 1.0) {
            return Err(Error::Config(format!("r={} outside (0, 1)", self.r)));
        }
        if !(self.r_s > 0.0 && self.r_s < 1.0) {
            return Err(Error::Config(format!("r_s={} outside (0, 1)", self.r_s)));
        }
        for (name, v) in [
            ("lambda1", self.lambda1),
            ("lambda2", self.lambda2),
            ("lambda3", self.lambda3),
            ("lambda4", self.lambda4),
        ] {
            if v < 0.0 || !v.is_finite() {
                return Err(Error::Config(format!("{name}={v} must be finite and >= 0")));
            }
        }
        if !(0.0..=1.0).contains(&self.r_p) {
            return Err(Error::Config(format!("r_p={} outside [0, 1]", self.r_p)));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("seeds list must be nonempty".into()));
        }
        for &p in &self.attack_p {
            if !(p > 0.0 && p < 1.0) {
                return Err(Error::Config(format!("attack p={p} outside (0, 1)")));
            }
        }
        if let DatasetSpec::Synth { case, .. } = &self.dataset {
            ScenarioCase::from_str(case)?;
        }
        if let Some(tag) = &self.ablation {
            AblationTag::from_str(tag)?;
        }
        Ok(())
    }

    pub fn ablation_tag(&self) -> Result<Option<AblationTag>> {
        self.ablation
            .as_deref()
            .map(AblationTag::from_str)
            .transpose()
    }

    /// Defaults for a synthetic-scenario run, calibrated at the 2500-node
    /// desk scale.
    pub fn synth_defaults(case: &str) -> Self {
        RunConfig {
            dataset: DatasetSpec::Synth {
                case: case.to_string(),
                data_seed: 0,
                label_gain: 1.0,
            },
            normalize: Normalize::Zscore,
            r: 0.2,
            r_s: 0.95,
            lambda1: 1e-3,
            lambda2: 10.0,
            lambda3: 0.02,
            lambda4: 10.0,
            r_p: 0.65,
            feature_epochs: 500,
            topology_epochs: 1000,
            debias_lr: 1e-3,
            debias_weight_decay: 1e-5,
            classifier: ClassifierSettings::default(),
            split: SplitSettings::default(),
            seeds: (0..10).collect(),
            attack_p: default_attack_p(),
            attack_epochs: 1000,
            ablation: None,
        }
    }

    fn csv_defaults(
        features: &str,
        edges: &str,
        labels: &str,
        sensitive: &[&str],
        lambda2: f64,
        lambda3: f64,
        lambda4: f64,
        r_p: f64,
    ) -> Self {
        RunConfig {
            dataset: DatasetSpec::Csv {
                features: features.into(),
                edges: edges.into(),
                labels: labels.into(),
                sensitive_columns: sensitive.iter().map(|s| s.to_string()).collect(),
            },
            normalize: Normalize::Zscore,
            r: 0.2,
            r_s: 0.7,
            lambda1: 1e-3,
            lambda2,
            lambda3,
            lambda4,
            r_p,
            feature_epochs: 500,
            topology_epochs: 1000,
            debias_lr: 1e-3,
            debias_weight_decay: 1e-5,
            classifier: ClassifierSettings::default(),
            split: SplitSettings::default(),
            seeds: (0..10).collect(),
            attack_p: default_attack_p(),
            attack_epochs: 1000,
            ablation: None,
        }
    }

    /// German credit defaults (gender as the sensitive attribute).
    pub fn german_defaults(dir: &str) -> Self {
        Self::csv_defaults(
            &format!("{dir}/features.csv"),
            &format!("{dir}/edges.csv"),
            &format!("{dir}/labels.csv"),
            &["Gender"],
            3.5e4,
            0.02,
            1.29e4,
            0.65,
        )
    }

    /// Recidivism defaults (race as the sensitive attribute).
    pub fn recidivism_defaults(dir: &str) -> Self {
        Self::csv_defaults(
            &format!("{dir}/features.csv"),
            &format!("{dir}/edges.csv"),
            &format!("{dir}/labels.csv"),
            &["race"],
            5e4,
            100.0,
            515.0,
            0.72,
        )
    }

    /// Credit-default defaults (age as the sensitive attribute).
    pub fn credit_defaults(dir: &str) -> Self {
        Self::csv_defaults(
            &format!("{dir}/features.csv"),
            &format!("{dir}/edges.csv"),
            &format!("{dir}/labels.csv"),
            &["Age"],
            8e4,
            100.0,
            1.34e5,
            0.724,
        )
    }
}
