//! Checkpoints and soft-label files.

use std::fs;
use std::io::Write;
use std::path::Path;

use anyhow::{bail, Context, Result};
use gnn2mlp_core::cascade::{Cascade, LambdaSign, StudentMeta, StudentParams};
use gnn2mlp_core::nn::Dense;
use gnn2mlp_core::teacher::TeacherParams;
use gnn2mlp_core::{Matrix, Real};
use serde::{Deserialize, Serialize};

use crate::config::{CascadeSection, TeacherSection};
use crate::dataset::{read_matrix, write_rows};

pub const TEACHER_CHECKPOINT: &str = "teacher_checkpoint.json";
pub const SOFT_LABELS: &str = "soft_labels.csv";
pub const TEACHER_REPORT: &str = "teacher_report.json";
pub const CASCADE_CHECKPOINT: &str = "cascade.json";
pub const DISTILL_REPORT: &str = "distill_report.json";
pub const PREDICTIONS: &str = "predictions.csv";
pub const PREDICTIONS_META: &str = "predictions_meta.json";
pub const TRADEOFF: &str = "tradeoff.csv";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixBlock {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl MatrixBlock {
    pub fn from_matrix<T: Real>(m: &Matrix<T>) -> Self {
        MatrixBlock {
            rows: m.rows(),
            cols: m.cols(),
            data: m.as_slice().iter().map(|v| v.as_f64()).collect(),
        }
    }

    pub fn to_matrix<T: Real>(&self) -> Result<Matrix<T>> {
        Ok(Matrix::new(
            self.rows,
            self.cols,
            self.data.iter().map(|&v| T::lit(v)).collect(),
        )?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerBlock {
    pub weight: MatrixBlock,
    pub bias: MatrixBlock,
}

fn layer_blocks<T: Real>(layers: &[Dense<T>]) -> Vec<LayerBlock> {
    layers
        .iter()
        .map(|l| LayerBlock {
            weight: MatrixBlock::from_matrix(&l.weight),
            bias: MatrixBlock::from_matrix(&l.bias),
        })
        .collect()
}

fn dense_layers<T: Real>(blocks: &[LayerBlock]) -> Result<Vec<Dense<T>>> {
    blocks
        .iter()
        .map(|b| {
            Ok(Dense {
                weight: b.weight.to_matrix()?,
                bias: b.bias.to_matrix()?,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TeacherHeader {
    pub precision: String,
    pub feat_dim: usize,
    pub hidden_dim: usize,
    pub n_classes: usize,
    pub depth: usize,
    pub seed: u64,
    pub hyperparameters: TeacherSection,
    /// Hex fingerprints, kept as strings so any JSON parser reads them exactly.
    pub dataset_fingerprint: String,
    pub soft_label_fingerprint: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TeacherCheckpoint {
    pub header: TeacherHeader,
    pub layers: Vec<LayerBlock>,
}

impl TeacherCheckpoint {
    pub fn new<T: Real>(header: TeacherHeader, p: &TeacherParams<T>) -> Self {
        TeacherCheckpoint {
            header,
            layers: layer_blocks(&p.layers),
        }
    }

    pub fn params<T: Real>(&self) -> Result<TeacherParams<T>> {
        Ok(TeacherParams {
            layers: dense_layers(&self.layers)?,
        })
    }
}

pub fn hex(v: u64) -> String {
    format!("{v:016x}")
}

pub fn write_json<S: Serialize>(path: &Path, value: &S) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

pub fn read_json<D: for<'de> Deserialize<'de>>(path: &Path) -> Result<D> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("cannot parse {}", path.display()))
}

/// Nine significant digits per probability.
pub fn write_soft_labels<T: Real>(path: &Path, z: &Matrix<T>) -> Result<()> {
    write_rows(path, &z.cast(), |w, v| write!(w, "{v:.8e}"))
}

pub fn read_soft_labels(path: &Path) -> Result<Matrix<f64>> {
    read_matrix(path)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudentRecord {
    pub epochs: usize,
    pub best_epoch: usize,
    pub best_val_accuracy: f64,
    pub final_lambda: f64,
    pub lambda_trajectory: Vec<f64>,
    pub pkd_losses: Vec<f64>,
    pub pma_losses: Vec<f64>,
    pub init_fingerprint: String,
    pub layers: Vec<LayerBlock>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CascadeCheckpoint {
    pub precision: String,
    pub n_students: usize,
    pub feat_dim: usize,
    pub hidden_dim: usize,
    pub n_classes: usize,
    pub n_layers: usize,
    pub seed: u64,
    pub hyperparameters: CascadeSection,
    pub dataset_fingerprint: String,
    pub teacher_fingerprint: String,
    pub students: Vec<StudentRecord>,
}

fn parse_hex(s: &str) -> Result<u64> {
    u64::from_str_radix(s, 16).with_context(|| format!("bad fingerprint {s:?}"))
}

impl CascadeCheckpoint {
    pub fn new<T: Real>(c: &Cascade<T>, section: &CascadeSection, precision: &str, dataset_fingerprint: u64) -> Self {
        let students = c
            .students
            .iter()
            .zip(&c.meta)
            .map(|(s, m)| StudentRecord {
                epochs: m.epochs,
                best_epoch: m.best_epoch,
                best_val_accuracy: m.best_val_accuracy,
                final_lambda: m.final_lambda,
                lambda_trajectory: m.lambda_trajectory.clone(),
                pkd_losses: m.pkd_losses.clone(),
                pma_losses: m.pma_losses.clone(),
                init_fingerprint: hex(m.init_fingerprint),
                layers: layer_blocks(&s.layers),
            })
            .collect();
        CascadeCheckpoint {
            precision: precision.to_owned(),
            n_students: c.len(),
            feat_dim: c.feat_dim(),
            hidden_dim: c.hidden_dim(),
            n_classes: c.n_classes(),
            n_layers: c.students[0].n_layers(),
            seed: c.config.seed,
            hyperparameters: section.clone(),
            dataset_fingerprint: hex(dataset_fingerprint),
            teacher_fingerprint: hex(c.teacher_fingerprint),
            students,
        }
    }

    pub fn cascade<T: Real>(&self) -> Result<Cascade<T>> {
        if self.students.len() != self.n_students {
            bail!(
                "checkpoint lists {} students but declares {}",
                self.students.len(),
                self.n_students
            );
        }
        let mut students = Vec::new();
        let mut meta = Vec::new();
        for r in &self.students {
            students.push(StudentParams::from_layers(dense_layers(&r.layers)?, self.feat_dim)?);
            meta.push(StudentMeta {
                epochs: r.epochs,
                best_epoch: r.best_epoch,
                best_val_accuracy: r.best_val_accuracy,
                lambda_trajectory: r.lambda_trajectory.clone(),
                final_lambda: r.final_lambda,
                pkd_losses: r.pkd_losses.clone(),
                pma_losses: r.pma_losses.clone(),
                init_fingerprint: parse_hex(&r.init_fingerprint)?,
            });
        }
        let mut cfg = self.hyperparameters.to_config(self.seed)?;
        cfg.n_students = self.n_students;
        Ok(Cascade::new(
            students,
            meta,
            parse_hex(&self.teacher_fingerprint)?,
            cfg,
        )?)
    }

    pub fn dataset_fingerprint(&self) -> Result<u64> {
        parse_hex(&self.dataset_fingerprint)
    }
}

pub fn lambda_sign_name(s: LambdaSign) -> &'static str {
    match s {
        LambdaSign::Formula => "formula",
        LambdaSign::Inverted => "inverted",
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn soft_labels_keep_nine_digits() {
        let z = Matrix::new(2, 2, vec![0.123456789123, 0.876543210877, 1.0 / 3.0, 2.0 / 3.0]).unwrap();
        let d = tempfile::tempdir().unwrap();
        let p = d.path().join(SOFT_LABELS);
        write_soft_labels(&p, &z).unwrap();
        let text = fs::read_to_string(&p).unwrap();
        assert_eq!(text.lines().count(), 2);
        assert!(text.lines().all(|l| l.split(',').count() == 2));
        let back = read_soft_labels(&p).unwrap();
        assert!(back.max_abs_diff(&z) <= 5e-10);
        for i in 0..2 {
            assert!((back.row(i).iter().sum::<f64>() - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn matrix_blocks_round_trip_through_json() {
        let m = Matrix::from_fn(3, 2, |i, j| (i as f64 + 0.1) / (j as f64 + 0.7));
        let text = serde_json::to_string(&MatrixBlock::from_matrix(&m)).unwrap();
        let back: MatrixBlock = serde_json::from_str(&text).unwrap();
        assert_eq!(back.to_matrix::<f64>().unwrap(), m);
        let m32: Matrix<f32> = m.cast();
        let text = serde_json::to_string(&MatrixBlock::from_matrix(&m32)).unwrap();
        let back: MatrixBlock = serde_json::from_str(&text).unwrap();
        assert_eq!(back.to_matrix::<f32>().unwrap(), m32);
    }
}
