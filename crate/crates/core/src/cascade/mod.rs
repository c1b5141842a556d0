//! Progressive cascade of MLP students distilled from teacher soft labels.
//!
//! Student `k` reads `[X | H_{k-1}]` (with `H_0 = 0`), is warm-started from
//! student `k - 1`, and minimizes
//! `k^beta * (alpha * CE + (1 - alpha) * KL) + L_mixup`,
//! where the mixup term trains on interpolated labeled pairs whose mixing
//! rate adapts to a moving average of the mixup loss.

mod mixup;
mod pkd;
mod student;
mod train;

use alloc::vec::Vec;

pub use mixup::{
    mixup_examples, pma_loss, sample_mixup_pairs, update_ema, update_lambda, LambdaSign, MixupConfig, MixupState,
    LAMBDA_MAX,
};
pub use pkd::{pkd_loss, PkdConfig};
pub(crate) use student::forward_eval;
pub use student::{student_forward, warm_start, StudentParams};
pub use train::{student_loss, train_student, StudentMeta, StudentOutcome};

use crate::error::{Error, Result};
use crate::fingerprint::Fingerprint;
use crate::graph::Graph;
use crate::nn;
use crate::numkit::Matrix;
use crate::real::Real;
use crate::teacher::soft_label_fingerprint;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CascadeConfig {
    pub n_students: usize,
    pub hidden_dim: usize,
    /// Layers per student, output layer included.
    pub n_layers: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub dropout: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub pkd: PkdConfig,
    pub mixup: MixupConfig,
    pub seed: u64,
}

impl Default for CascadeConfig {
    fn default() -> Self {
        CascadeConfig {
            n_students: 10,
            hidden_dim: 128,
            n_layers: 2,
            lr: 0.001,
            weight_decay: 5e-4,
            dropout: 0.5,
            max_epochs: 500,
            patience: 50,
            pkd: PkdConfig::default(),
            mixup: MixupConfig::default(),
            seed: 0,
        }
    }
}

impl CascadeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_students == 0 {
            return Err(Error::validation("a cascade needs at least one student"));
        }
        if self.patience >= self.max_epochs {
            return Err(Error::validation(alloc::format!(
                "patience ({}) must be smaller than max_epochs ({})",
                self.patience,
                self.max_epochs
            )));
        }
        if self.n_layers < 2 || self.hidden_dim == 0 {
            return Err(Error::validation(
                "students need >= 2 layers and a positive hidden width",
            ));
        }
        if !(self.lr.is_finite() && self.lr > 0.0 && self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return Err(Error::validation("lr must be positive and weight decay non-negative"));
        }
        nn::check_dropout(self.dropout)?;
        self.pkd.validate()?;
        self.mixup.validate()
    }
}

/// Ordered, trained students plus their training records.
#[derive(Debug, Clone, PartialEq)]
pub struct Cascade<T> {
    pub students: Vec<StudentParams<T>>,
    pub meta: Vec<StudentMeta>,
    /// Fingerprint of the soft labels the cascade was distilled from.
    pub teacher_fingerprint: u64,
    pub config: CascadeConfig,
}

impl<T: Real> Cascade<T> {
    /// Assemble a cascade from parts, checking that all students share one shape.
    pub fn new(
        students: Vec<StudentParams<T>>,
        meta: Vec<StudentMeta>,
        teacher_fingerprint: u64,
        config: CascadeConfig,
    ) -> Result<Self> {
        if students.is_empty() {
            return Err(Error::validation("empty cascade"));
        }
        let shape = students[0].shape_vector();
        let feat = students[0].feat_dim();
        if students
            .iter()
            .any(|s| s.shape_vector() != shape || s.feat_dim() != feat)
        {
            return Err(Error::validation("cascade students differ in shape"));
        }
        Ok(Cascade {
            students,
            meta,
            teacher_fingerprint,
            config,
        })
    }

    pub fn len(&self) -> usize {
        self.students.len()
    }

    pub fn is_empty(&self) -> bool {
        self.students.is_empty()
    }

    pub fn feat_dim(&self) -> usize {
        self.students.first().map_or(0, StudentParams::feat_dim)
    }

    pub fn hidden_dim(&self) -> usize {
        self.students.first().map_or(0, StudentParams::hidden_dim)
    }

    pub fn n_classes(&self) -> usize {
        self.students.first().map_or(0, StudentParams::n_classes)
    }

    pub fn fingerprint(&self) -> u64 {
        let mut f = Fingerprint::new();
        for s in &self.students {
            f.u64(s.fingerprint());
        }
        f.u64(self.teacher_fingerprint);
        f.finish()
    }
}

/// Train the full cascade.
///
/// Student 1 starts from a seeded random init, student `k >= 2` from a copy
/// of student `k - 1`. Each student receives the eval-mode hidden
/// representation of its predecessor, and the mixing rate carries over from
/// one student to the next while the loss average restarts per student.
pub fn train_cascade<T: Real>(g: &Graph<T>, z_g: &Matrix<T>, cfg: &CascadeConfig) -> Result<Cascade<T>> {
    cfg.validate()?;
    if z_g.shape() != (g.n_nodes(), g.n_classes()) {
        return Err(Error::validation(alloc::format!(
            "teacher soft labels are {}x{}, graph has {} nodes and {} classes",
            z_g.rows(),
            z_g.cols(),
            g.n_nodes(),
            g.n_classes()
        )));
    }
    let mut students: Vec<StudentParams<T>> = Vec::with_capacity(cfg.n_students);
    let mut metas = Vec::with_capacity(cfg.n_students);
    let mut hidden = Matrix::zeros(g.n_nodes(), cfg.hidden_dim);
    let mut state = cfg.mixup.initial_state();
    for k in 1..=cfg.n_students {
        let init = match students.last() {
            None => StudentParams::init(g.feat_dim(), cfg.hidden_dim, g.n_classes(), cfg.n_layers, cfg.seed)?,
            Some(prev) => warm_start(prev),
        };
        let out = train_student(k, g, z_g, &hidden, init, cfg, state.reset_average()).map_err(|e| match e {
            Error::Training { epoch, component, .. } => Error::Training {
                student: Some(k),
                epoch,
                component,
            },
            other => other,
        })?;
        students.push(out.params);
        metas.push(out.meta);
        hidden = out.hidden;
        state = out.state;
    }
    Cascade::new(students, metas, soft_label_fingerprint(z_g), *cfg)
}
