//! Confidence-gated anytime inference over a trained cascade.

use alloc::vec::Vec;

use crate::cascade::{forward_eval, Cascade};
use crate::error::{Error, Result};
use crate::numkit::{softmax_rows, Matrix};
use crate::real::Real;

/// Stopping rules for [`run_anytime`]. Any rule that fires ends the run.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct InferencePolicy {
    pub conf_threshold: Option<f64>,
    pub max_students: Option<usize>,
    /// Checked between students; a started student always completes.
    pub budget_nanos: Option<u64>,
}

impl InferencePolicy {
    pub fn validate(&self) -> Result<()> {
        if self.conf_threshold.is_none() && self.max_students.is_none() && self.budget_nanos.is_none() {
            return Err(Error::validation(
                "inference policy needs a confidence threshold, a student cap or a time budget",
            ));
        }
        if let Some(t) = self.conf_threshold {
            if !(0.0..=1.0).contains(&t) {
                return Err(Error::validation(alloc::format!(
                    "confidence threshold {t} outside [0, 1]"
                )));
            }
        }
        if self.max_students == Some(0) {
            return Err(Error::validation("max_students must be at least 1"));
        }
        Ok(())
    }
}

/// Monotonic time source, in nanoseconds from an arbitrary origin.
pub trait Clock {
    fn now_nanos(&self) -> u64;
}

#[cfg(feature = "std")]
#[derive(Debug, Clone, Copy)]
pub struct StdClock {
    origin: std::time::Instant,
}

#[cfg(feature = "std")]
impl Default for StdClock {
    fn default() -> Self {
        StdClock {
            origin: std::time::Instant::now(),
        }
    }
}

#[cfg(feature = "std")]
impl Clock for StdClock {
    fn now_nanos(&self) -> u64 {
        self.origin.elapsed().as_nanos() as u64
    }
}

/// A clock that never advances, for budget-free deterministic runs.
#[derive(Debug, Clone, Copy, Default)]
pub struct FrozenClock;

impl Clock for FrozenClock {
    fn now_nanos(&self) -> u64 {
        0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InferenceResult {
    /// Confidence-weighted mixture of the executed students' probabilities.
    pub prediction: Matrix<f64>,
    pub executed: usize,
    pub confidences: Vec<f64>,
    pub weights: Vec<f64>,
    /// Wall-clock nanoseconds spent in each executed student.
    pub elapsed: Vec<u64>,
}

/// Mean over `eval_idx` of the largest softmax probability per row.
pub fn confidence<T: Real>(logits: &Matrix<T>, eval_idx: &[usize]) -> Result<f64> {
    if eval_idx.is_empty() {
        return Err(Error::contract("confidence over an empty evaluation set"));
    }
    let mut total = 0.0f64;
    for &i in eval_idx {
        if i >= logits.rows() {
            return Err(Error::contract(alloc::format!(
                "evaluation index {i} out of range for {} rows",
                logits.rows()
            )));
        }
        let row = logits.row(i);
        let max = row.iter().fold(f64::NEG_INFINITY, |m, v| m.max(v.as_f64()));
        let z: f64 = row.iter().map(|v| libm::exp(v.as_f64() - max)).sum();
        total += 1.0 / z;
    }
    Ok(total / eval_idx.len() as f64)
}

fn softmax_vec(v: &[f64]) -> Vec<f64> {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = v.iter().map(|c| libm::exp(c - max)).collect();
    let z: f64 = e.iter().sum();
    e.into_iter().map(|x| x / z).collect()
}

/// Combine per-student probabilities with softmax weights over their confidences.
pub fn ensemble<T: Real>(preds: &[Matrix<T>], confs: &[f64]) -> Result<(Matrix<f64>, Vec<f64>)> {
    if preds.is_empty() || preds.len() != confs.len() {
        return Err(Error::contract(alloc::format!(
            "ensemble needs matching non-empty lists, got {} predictions and {} confidences",
            preds.len(),
            confs.len()
        )));
    }
    let shape = preds[0].shape();
    if let Some(p) = preds.iter().find(|p| p.shape() != shape) {
        return Err(Error::dim("ensemble", shape, p.shape()));
    }
    let weights = softmax_vec(confs);
    let mut out = Matrix::zeros(shape.0, shape.1);
    for (p, &w) in preds.iter().zip(&weights) {
        for (o, v) in out.as_mut_slice().iter_mut().zip(p.as_slice()) {
            *o += w * v.as_f64();
        }
    }
    Ok((out, weights))
}

/// Run students in order until a policy rule fires, then ensemble the executed ones.
pub fn run_anytime<T: Real, C: Clock + ?Sized>(
    cascade: &Cascade<T>,
    x: &Matrix<T>,
    policy: &InferencePolicy,
    eval_idx: &[usize],
    clock: &C,
) -> Result<InferenceResult> {
    policy.validate()?;
    if cascade.is_empty() {
        return Err(Error::validation("cannot run inference on an empty cascade"));
    }
    if x.cols() != cascade.feat_dim() {
        return Err(Error::validation(alloc::format!(
            "feature width mismatch: cascade expects d = {}, input has d = {}",
            cascade.feat_dim(),
            x.cols()
        )));
    }
    let limit = policy.max_students.unwrap_or(cascade.len()).min(cascade.len());
    let start = clock.now_nanos();
    let mut hidden: Option<Matrix<T>> = None;
    let mut preds = Vec::new();
    let mut confidences = Vec::new();
    let mut elapsed = Vec::new();
    for student in &cascade.students[..limit] {
        let t0 = clock.now_nanos();
        let (h, logits) = forward_eval(student, x, hidden.as_ref())?;
        let c = confidence(&logits, eval_idx)?;
        preds.push(softmax_rows(&logits));
        confidences.push(c);
        hidden = Some(h);
        let t1 = clock.now_nanos();
        elapsed.push(t1.saturating_sub(t0));
        if policy.conf_threshold.is_some_and(|t| c >= t) {
            break;
        }
        if policy.budget_nanos.is_some_and(|b| t1.saturating_sub(start) >= b) {
            break;
        }
    }
    let (prediction, weights) = ensemble(&preds, &confidences)?;
    Ok(InferenceResult {
        prediction,
        executed: preds.len(),
        confidences,
        weights,
        elapsed,
    })
}

/// Fraction of `idx` rows whose argmax agrees with the one-hot labels.
pub fn accuracy<T: Real, U: Real>(pred: &Matrix<T>, y: &Matrix<U>, idx: &[usize]) -> Result<f64> {
    if idx.is_empty() {
        return Err(Error::contract("accuracy over an empty index set"));
    }
    if pred.shape() != y.shape() {
        return Err(Error::dim("accuracy", pred.shape(), y.shape()));
    }
    let p = pred.argmax_rows();
    let t = y.argmax_rows();
    if let Some(&i) = idx.iter().find(|&&i| i >= p.len()) {
        return Err(Error::contract(alloc::format!(
            "index {i} out of range for {} rows",
            p.len()
        )));
    }
    Ok(idx.iter().filter(|&&i| p[i] == t[i]).count() as f64 / idx.len() as f64)
}
