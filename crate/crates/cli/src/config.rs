//! Experiment configuration: built-in defaults, overridden by a JSON file,
//! overridden by command-line flags.

use std::path::{Path, PathBuf};

use anyhow::{bail, Result};
use gnn2mlp_core::cascade::{CascadeConfig, LambdaSign, MixupConfig, PkdConfig};
use gnn2mlp_core::graph::SbmSpec;
use gnn2mlp_core::inference::InferencePolicy;
use gnn2mlp_core::teacher::TeacherConfig;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetSection,
    pub teacher: TeacherSection,
    pub cascade: CascadeSection,
    pub policy: PolicySection,
    pub run: RunSection,
}

#[derive(Default, Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSection {
    pub path: Option<PathBuf>,
    /// L1-normalize feature rows after loading.
    pub row_normalize: bool,
    pub synth: SynthSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSection {
    pub nodes: usize,
    pub classes: usize,
    pub feat_dim: usize,
    pub p_in: f64,
    pub p_out: f64,
    pub noise: f64,
}

impl Default for SynthSection {
    fn default() -> Self {
        SynthSection {
            nodes: 600,
            classes: 3,
            feat_dim: 16,
            p_in: 0.15,
            p_out: 0.02,
            noise: 1.5,
        }
    }
}

impl SynthSection {
    pub fn spec(&self, seed: u64) -> SbmSpec {
        SbmSpec {
            n_nodes: self.nodes,
            n_classes: self.classes,
            feat_dim: self.feat_dim,
            p_in: self.p_in,
            p_out: self.p_out,
            feat_noise: self.noise,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TeacherSection {
    pub hidden_dim: usize,
    pub depth: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub dropout: f64,
    pub max_epochs: usize,
    pub patience: usize,
}

impl Default for TeacherSection {
    fn default() -> Self {
        let d = TeacherConfig::default();
        TeacherSection {
            hidden_dim: d.hidden_dim,
            depth: d.depth,
            lr: d.lr,
            weight_decay: d.weight_decay,
            dropout: d.dropout,
            max_epochs: d.max_epochs,
            patience: d.patience,
        }
    }
}

impl TeacherSection {
    pub fn to_config(&self, seed: u64) -> Result<TeacherConfig> {
        let cfg = TeacherConfig {
            hidden_dim: self.hidden_dim,
            depth: self.depth,
            lr: self.lr,
            weight_decay: self.weight_decay,
            dropout: self.dropout,
            max_epochs: self.max_epochs,
            patience: self.patience,
            seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CascadeSection {
    pub students: usize,
    pub hidden_dim: usize,
    pub layers: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub dropout: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub tau: f64,
    pub sigma: f64,
    pub lambda_init: f64,
    /// `formula` or `inverted`.
    pub lambda_sign: String,
}

impl Default for CascadeSection {
    fn default() -> Self {
        let d = CascadeConfig::default();
        CascadeSection {
            students: d.n_students,
            hidden_dim: d.hidden_dim,
            layers: d.n_layers,
            lr: d.lr,
            weight_decay: d.weight_decay,
            dropout: d.dropout,
            max_epochs: d.max_epochs,
            patience: d.patience,
            alpha: d.pkd.alpha,
            beta: d.pkd.beta,
            gamma: d.mixup.gamma,
            tau: d.mixup.tau,
            sigma: d.mixup.sigma,
            lambda_init: d.mixup.lambda_init,
            lambda_sign: "formula".into(),
        }
    }
}

impl CascadeSection {
    pub fn to_config(&self, seed: u64) -> Result<CascadeConfig> {
        let sign = match self.lambda_sign.as_str() {
            "formula" => LambdaSign::Formula,
            "inverted" => LambdaSign::Inverted,
            other => bail!("lambda_sign must be `formula` or `inverted`, got {other:?}"),
        };
        let cfg = CascadeConfig {
            n_students: self.students,
            hidden_dim: self.hidden_dim,
            n_layers: self.layers,
            lr: self.lr,
            weight_decay: self.weight_decay,
            dropout: self.dropout,
            max_epochs: self.max_epochs,
            patience: self.patience,
            pkd: PkdConfig {
                alpha: self.alpha,
                beta: self.beta,
            },
            mixup: MixupConfig {
                lambda_init: self.lambda_init,
                gamma: self.gamma,
                tau: self.tau,
                sigma: self.sigma,
                sign,
            },
            seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolicySection {
    /// `null` disables the confidence gate.
    pub conf_threshold: Option<f64>,
    pub max_students: Option<usize>,
    pub budget_ms: Option<f64>,
}

impl Default for PolicySection {
    fn default() -> Self {
        PolicySection {
            conf_threshold: Some(0.9),
            max_students: None,
            budget_ms: None,
        }
    }
}

impl PolicySection {
    pub fn to_policy(&self) -> Result<InferencePolicy> {
        if let Some(b) = self.budget_ms {
            if !(b >= 0.0 && b.is_finite()) {
                bail!("budget_ms must be a non-negative number, got {b}");
            }
        }
        let p = InferencePolicy {
            conf_threshold: self.conf_threshold,
            max_students: self.max_students,
            budget_nanos: self.budget_ms.map(|b| (b * 1e6) as u64),
        };
        p.validate()?;
        Ok(p)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    F32,
    F64,
}

impl Precision {
    pub fn name(self) -> &'static str {
        match self {
            Precision::F32 => "f32",
            Precision::F64 => "f64",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub seed: u64,
    pub out: PathBuf,
    pub threads: usize,
    pub precision: Precision,
    /// Timed repetitions per sweep row.
    pub repeats: usize,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            seed: 0,
            out: PathBuf::from("out"),
            threads: 1,
            precision: Precision::F64,
            repeats: 5,
        }
    }
}

impl ExperimentConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        crate::artifacts::read_json(path)
    }
}
