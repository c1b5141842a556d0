//! Command implementations. Each returns `Err(Failure::Usage)` for invalid
//! configuration and `Err(Failure::Runtime)` for anything that goes wrong
//! after validation.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use gnn2mlp_core::cascade::{train_cascade, Cascade};
use gnn2mlp_core::graph::{synth_sbm, Graph};
use gnn2mlp_core::inference::{accuracy, run_anytime, Clock, FrozenClock, InferencePolicy, StdClock};
use gnn2mlp_core::teacher::{soft_label_fingerprint, split_accuracy, train_teacher};
use gnn2mlp_core::{Matrix, Real};
use serde::Serialize;

use crate::artifacts::{
    hex, read_json, read_soft_labels, write_json, write_soft_labels, CascadeCheckpoint, TeacherCheckpoint,
    TeacherHeader, CASCADE_CHECKPOINT, DISTILL_REPORT, PREDICTIONS, PREDICTIONS_META, SOFT_LABELS, TEACHER_CHECKPOINT,
    TEACHER_REPORT, TRADEOFF,
};
use crate::config::ExperimentConfig;
use crate::dataset::{load_dataset, read_matrix, save_dataset};

#[derive(Debug, thiserror::Error)]
pub enum Failure {
    #[error("{0:#}")]
    Usage(anyhow::Error),
    #[error("{0:#}")]
    Runtime(anyhow::Error),
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Runtime(_) => 1,
        }
    }
}

pub type Outcome<T = ()> = std::result::Result<T, Failure>;

pub(crate) trait Classify<T> {
    fn usage(self) -> Outcome<T>;
    fn runtime(self) -> Outcome<T>;
}

impl<T, E: Into<anyhow::Error>> Classify<T> for std::result::Result<T, E> {
    fn usage(self) -> Outcome<T> {
        self.map_err(|e| Failure::Usage(e.into()))
    }

    fn runtime(self) -> Outcome<T> {
        self.map_err(|e| Failure::Runtime(e.into()))
    }
}

fn create_out(cfg: &ExperimentConfig) -> Outcome<&Path> {
    let out = cfg.run.out.as_path();
    fs::create_dir_all(out)
        .with_context(|| format!("cannot create output directory {}", out.display()))
        .runtime()?;
    Ok(out)
}

/// Load the configured dataset as `f64` (the precision fingerprints use).
fn load_graph(cfg: &ExperimentConfig) -> Outcome<Graph<f64>> {
    let dir = cfg
        .dataset
        .path
        .as_ref()
        .ok_or_else(|| anyhow!("no dataset given: pass --data <dir> or set dataset.path"))
        .usage()?;
    if !dir.is_dir() {
        return Err(Failure::Usage(anyhow!(
            "dataset directory {} does not exist",
            dir.display()
        )));
    }
    let mut g = load_dataset(dir).runtime()?;
    if cfg.dataset.row_normalize {
        g.row_normalize_features();
    }
    Ok(g)
}

pub fn synth(cfg: &ExperimentConfig) -> Outcome {
    let spec = cfg.dataset.synth.spec(cfg.run.seed);
    let g: Graph<f64> = synth_sbm(&spec).usage()?;
    let out = create_out(cfg)?;
    save_dataset(out, &g).runtime()?;
    println!(
        "synth: N={} C={} d={} edges={} -> {}",
        g.n_nodes(),
        g.n_classes(),
        g.feat_dim(),
        g.undirected_edges().len(),
        out.display()
    );
    Ok(())
}

fn optional_accuracy<T: Real>(pred: &Matrix<T>, classes: &[usize], idx: &[usize]) -> Option<f64> {
    (!idx.is_empty()).then(|| split_accuracy(pred, classes, idx))
}

#[derive(Debug, Serialize)]
struct TeacherReport {
    seed: u64,
    precision: &'static str,
    epochs: usize,
    best_epoch: usize,
    best_val_accuracy: f64,
    train_accuracy: Option<f64>,
    val_accuracy: Option<f64>,
    test_accuracy: Option<f64>,
    dataset_fingerprint: String,
    soft_label_fingerprint: String,
    losses: Vec<f64>,
}

pub fn train_teacher_cmd<T: Real>(cfg: &ExperimentConfig) -> Outcome {
    let tcfg = cfg.teacher.to_config(cfg.run.seed).usage()?;
    let g64 = load_graph(cfg)?;
    let g: Graph<T> = g64.cast();
    let out = create_out(cfg)?;
    let art = train_teacher(&g, &tcfg).runtime()?;

    let soft_path = out.join(SOFT_LABELS);
    write_soft_labels(&soft_path, &art.soft_labels).runtime()?;
    let stored = read_soft_labels(&soft_path).runtime()?;
    let s = g.splits();
    let header = TeacherHeader {
        precision: cfg.run.precision.name().into(),
        feat_dim: g.feat_dim(),
        hidden_dim: tcfg.hidden_dim,
        n_classes: g.n_classes(),
        depth: tcfg.depth,
        seed: tcfg.seed,
        hyperparameters: cfg.teacher.clone(),
        dataset_fingerprint: hex(g64.fingerprint()),
        soft_label_fingerprint: hex(soft_label_fingerprint(&stored)),
    };
    let report = TeacherReport {
        seed: tcfg.seed,
        precision: cfg.run.precision.name(),
        epochs: art.meta.epochs,
        best_epoch: art.meta.best_epoch,
        best_val_accuracy: art.meta.best_val_accuracy,
        train_accuracy: optional_accuracy(&art.soft_labels, g.classes(), &s.labeled),
        val_accuracy: optional_accuracy(&art.soft_labels, g.classes(), &s.validation),
        test_accuracy: optional_accuracy(&art.soft_labels, g.classes(), &s.test),
        dataset_fingerprint: header.dataset_fingerprint.clone(),
        soft_label_fingerprint: header.soft_label_fingerprint.clone(),
        losses: art.meta.losses.clone(),
    };
    write_json(
        &out.join(TEACHER_CHECKPOINT),
        &TeacherCheckpoint::new(header, &art.params),
    )
    .runtime()?;
    write_json(&out.join(TEACHER_REPORT), &report).runtime()?;
    println!(
        "train-teacher: epochs={} best_epoch={} val={:.4} test={} -> {}",
        report.epochs,
        report.best_epoch,
        report.best_val_accuracy,
        report.test_accuracy.map_or("n/a".into(), |a| format!("{a:.4}")),
        out.display()
    );
    Ok(())
}

#[derive(Debug, Serialize)]
struct StudentReport {
    k: usize,
    epochs: usize,
    best_epoch: usize,
    best_val_accuracy: f64,
    /// Accuracy of the ensemble of students `1..=k`.
    val_accuracy: Option<f64>,
    test_accuracy: Option<f64>,
    final_lambda: f64,
    lambda_trajectory: Vec<f64>,
}

#[derive(Debug, Serialize)]
struct DistillReport {
    seed: u64,
    precision: &'static str,
    n_students: usize,
    teacher_test_accuracy: Option<f64>,
    students: Vec<StudentReport>,
    dataset_fingerprint: String,
    teacher_fingerprint: String,
}

/// Ensemble predictions of the first `k` students, confidence measured on `eval_idx`.
pub fn stopped_at<T: Real>(c: &Cascade<T>, x: &Matrix<T>, k: usize, eval_idx: &[usize]) -> anyhow::Result<Matrix<f64>> {
    let policy = InferencePolicy {
        max_students: Some(k),
        ..Default::default()
    };
    Ok(run_anytime(c, x, &policy, eval_idx, &FrozenClock)?.prediction)
}

fn split_ensemble_accuracy(pred: &Matrix<f64>, labels: &Matrix<f64>, idx: &[usize]) -> anyhow::Result<Option<f64>> {
    if idx.is_empty() {
        return Ok(None);
    }
    Ok(Some(accuracy(pred, labels, idx)?))
}

pub fn distill_cmd<T: Real>(cfg: &ExperimentConfig, teacher_dir: &Path) -> Outcome {
    let ccfg = cfg.cascade.to_config(cfg.run.seed).usage()?;
    let g64 = load_graph(cfg)?;
    let fp = g64.fingerprint();
    let ckpt: TeacherCheckpoint = read_json(&teacher_dir.join(TEACHER_CHECKPOINT)).runtime()?;
    if ckpt.header.dataset_fingerprint != hex(fp) {
        return Err(Failure::Runtime(anyhow!(
            "teacher in {} was trained on a different dataset (fingerprint {} vs {})",
            teacher_dir.display(),
            ckpt.header.dataset_fingerprint,
            hex(fp)
        )));
    }
    let z64 = read_soft_labels(&teacher_dir.join(SOFT_LABELS)).runtime()?;
    if hex(soft_label_fingerprint(&z64)) != ckpt.header.soft_label_fingerprint {
        return Err(Failure::Runtime(anyhow!(
            "{} does not match the teacher checkpoint",
            teacher_dir.join(SOFT_LABELS).display()
        )));
    }
    if z64.shape() != (g64.n_nodes(), g64.n_classes()) {
        return Err(Failure::Runtime(anyhow!(
            "soft labels are {}x{}, dataset has {} nodes and {} classes",
            z64.rows(),
            z64.cols(),
            g64.n_nodes(),
            g64.n_classes()
        )));
    }
    let out = create_out(cfg)?;
    let g: Graph<T> = g64.cast();
    let cascade = train_cascade(&g, &z64.cast::<T>(), &ccfg).runtime()?;

    let s = g.splits();
    let labels = g64.labels();
    let mut students = Vec::new();
    for (k, m) in (1..=cascade.len()).zip(&cascade.meta) {
        let pred = stopped_at(&cascade, g.features(), k, &s.unlabeled).runtime()?;
        students.push(StudentReport {
            k,
            epochs: m.epochs,
            best_epoch: m.best_epoch,
            best_val_accuracy: m.best_val_accuracy,
            val_accuracy: split_ensemble_accuracy(&pred, labels, &s.validation).runtime()?,
            test_accuracy: split_ensemble_accuracy(&pred, labels, &s.test).runtime()?,
            final_lambda: m.final_lambda,
            lambda_trajectory: m.lambda_trajectory.clone(),
        });
    }
    let report = DistillReport {
        seed: ccfg.seed,
        precision: cfg.run.precision.name(),
        n_students: cascade.len(),
        teacher_test_accuracy: optional_accuracy(&z64, g.classes(), &s.test),
        students,
        dataset_fingerprint: hex(fp),
        teacher_fingerprint: hex(cascade.teacher_fingerprint),
    };
    let ckpt = CascadeCheckpoint::new(&cascade, &cfg.cascade, cfg.run.precision.name(), fp);
    write_json(&out.join(CASCADE_CHECKPOINT), &ckpt).runtime()?;
    write_json(&out.join(DISTILL_REPORT), &report).runtime()?;
    let last = report.students.last().expect("cascade has students");
    println!(
        "distill: K={} test={} (teacher {}) -> {}",
        report.n_students,
        last.test_accuracy.map_or("n/a".into(), |a| format!("{a:.4}")),
        report.teacher_test_accuracy.map_or("n/a".into(), |a| format!("{a:.4}")),
        out.display()
    );
    Ok(())
}

pub fn load_cascade<T: Real>(dir: &Path) -> Outcome<(Cascade<T>, u64)> {
    let path = dir.join(CASCADE_CHECKPOINT);
    let ckpt: CascadeCheckpoint = read_json(&path).runtime()?;
    let c = ckpt
        .cascade()
        .with_context(|| format!("invalid {}", path.display()))
        .runtime()?;
    Ok((c, ckpt.dataset_fingerprint().runtime()?))
}

#[derive(Debug, Serialize)]
struct PredictionMeta {
    executed: usize,
    n_students: usize,
    confidences: Vec<f64>,
    weights: Vec<f64>,
    per_student_ms: Vec<f64>,
    elapsed_ms: f64,
}

fn ms(nanos: u64) -> f64 {
    nanos as f64 / 1e6
}

pub fn infer_cmd<T: Real>(cfg: &ExperimentConfig, cascade_dir: &Path, features: Option<&Path>) -> Outcome {
    let policy = cfg.policy.to_policy().usage()?;
    let features: PathBuf = match (features, cfg.dataset.path.as_ref()) {
        (Some(f), _) => f.to_path_buf(),
        (None, Some(d)) => d.join(crate::dataset::FEATURES),
        (None, None) => return Err(Failure::Usage(anyhow!("pass --features <csv> or --data <dir>"))),
    };
    let (cascade, _) = load_cascade::<T>(cascade_dir)?;
    let mut x64 = read_matrix(&features).runtime()?;
    if x64.cols() != cascade.feat_dim() {
        return Err(Failure::Runtime(anyhow!(
            "feature width mismatch: cascade expects d = {}, {} has d = {}",
            cascade.feat_dim(),
            features.display(),
            x64.cols()
        )));
    }
    if cfg.dataset.row_normalize {
        let rows = x64.rows();
        x64 = row_normalized(x64, rows);
    }
    let x: Matrix<T> = x64.cast();
    let eval: Vec<usize> = (0..x.rows()).collect();
    let clock = StdClock::default();
    let res = run_anytime(&cascade, &x, &policy, &eval, &clock).runtime()?;

    let out = create_out(cfg)?;
    let path = out.join(PREDICTIONS);
    let mut w = BufWriter::new(
        fs::File::create(&path)
            .with_context(|| format!("cannot create {}", path.display()))
            .runtime()?,
    );
    let classes = res.prediction.argmax_rows();
    let mut text = String::from("node,pred_class,confidence_weighted_max\n");
    for (i, row) in res.prediction.row_iter().enumerate() {
        text.push_str(&format!("{i},{},{}\n", classes[i], row[classes[i]]));
    }
    w.write_all(text.as_bytes()).and_then(|_| w.flush()).runtime()?;
    let meta = PredictionMeta {
        executed: res.executed,
        n_students: cascade.len(),
        confidences: res.confidences.clone(),
        weights: res.weights.clone(),
        per_student_ms: res.elapsed.iter().map(|&n| ms(n)).collect(),
        elapsed_ms: ms(res.elapsed.iter().sum()),
    };
    write_json(&out.join(PREDICTIONS_META), &meta).runtime()?;
    println!(
        "infer: executed k={} of {} in {:.3} ms",
        meta.executed, meta.n_students, meta.elapsed_ms
    );
    Ok(())
}

fn row_normalized(mut x: Matrix<f64>, rows: usize) -> Matrix<f64> {
    for i in 0..rows {
        let s: f64 = x.row(i).iter().map(|v| v.abs()).sum();
        if s > 0.0 {
            x.row_mut(i).iter_mut().for_each(|v| *v /= s);
        }
    }
    x
}

/// One trade-off row per student count.
#[derive(Debug, Clone, PartialEq)]
pub struct TradeoffRow {
    pub k: usize,
    pub accuracy: f64,
    pub cum_ms: f64,
}

/// Test accuracy when stopping at each `k`, and cumulative inference time
/// built from the per-student median over `repeats` timed full runs.
pub fn tradeoff<T: Real, C: Clock>(
    c: &Cascade<T>,
    g: &Graph<T>,
    repeats: usize,
    clock: &C,
) -> anyhow::Result<Vec<TradeoffRow>> {
    let s = g.splits();
    if s.test.is_empty() {
        return Err(anyhow!("the sweep needs a non-empty test split"));
    }
    let all = InferencePolicy {
        max_students: Some(c.len()),
        ..Default::default()
    };
    let mut timings: Vec<Vec<u64>> = vec![Vec::new(); c.len()];
    for _ in 0..repeats.max(1) {
        let r = run_anytime(c, g.features(), &all, &s.unlabeled, clock)?;
        for (t, e) in timings.iter_mut().zip(r.elapsed) {
            t.push(e);
        }
    }
    let mut rows = Vec::new();
    let mut cum = 0u64;
    for (k, t) in (1..=c.len()).zip(timings.iter_mut()) {
        t.sort_unstable();
        cum += t[t.len() / 2].max(1);
        let pred = stopped_at(c, g.features(), k, &s.unlabeled)?;
        rows.push(TradeoffRow {
            k,
            accuracy: accuracy(&pred, g.labels(), &s.test)?,
            cum_ms: ms(cum),
        });
    }
    Ok(rows)
}

pub fn sweep_cmd<T: Real>(cfg: &ExperimentConfig, cascade_dirs: &[PathBuf]) -> Outcome {
    let g64 = load_graph(cfg)?;
    let fp = g64.fingerprint();
    let g: Graph<T> = g64.cast();
    let mut text = String::from("k,accuracy,cum_ms\n");
    for dir in cascade_dirs {
        let (c, cfp) = load_cascade::<T>(dir)?;
        if cfp != fp {
            return Err(Failure::Runtime(anyhow!(
                "cascade in {} was distilled on a different dataset",
                dir.display()
            )));
        }
        for r in tradeoff(&c, &g, cfg.run.repeats, &StdClock::default()).runtime()? {
            text.push_str(&format!("{},{},{:.6}\n", r.k, r.accuracy, r.cum_ms));
        }
    }
    let out = create_out(cfg)?;
    crate::dataset::write_text(&out.join(TRADEOFF), &text).runtime()?;
    print!("{text}");
    Ok(())
}
