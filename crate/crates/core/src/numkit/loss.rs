use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use super::dense::Matrix;
use super::for_each_row;
use crate::error::{Error, Result};
use crate::real::Real;

/// Key under which loss functions report the gradient w.r.t. their logits.
pub const LOGITS: &str = "logits";

/// A scalar loss value together with gradients keyed by parameter name.
#[derive(Debug, Clone, PartialEq)]
pub struct GradPair<T> {
    pub value: T,
    pub grads: BTreeMap<String, Matrix<T>>,
}

impl<T: Real> GradPair<T> {
    pub fn single(value: T, name: &str, grad: Matrix<T>) -> Self {
        let mut grads = BTreeMap::new();
        grads.insert(String::from(name), grad);
        GradPair { value, grads }
    }

    pub fn grad(&self, name: &str) -> Option<&Matrix<T>> {
        self.grads.get(name)
    }

    /// Multiply the value and every gradient by `s`.
    pub fn scaled(mut self, s: T) -> Self {
        self.value *= s;
        for g in self.grads.values_mut() {
            g.scale(s);
        }
        self
    }

    /// Sum two losses; gradients with the same key are added.
    #[allow(clippy::should_implement_trait)]
    pub fn add(mut self, other: GradPair<T>) -> Result<Self> {
        self.value += other.value;
        for (k, g) in other.grads {
            match self.grads.get_mut(&k) {
                Some(mine) => mine.axpy(T::one(), &g)?,
                None => {
                    self.grads.insert(k, g);
                }
            }
        }
        Ok(self)
    }
}

/// `log(softmax(row))` written into `out`, stabilized by max subtraction.
pub fn log_softmax_row<T: Real>(row: &[T], out: &mut [T]) {
    let max = row.iter().copied().fold(T::neg_infinity(), T::max);
    let mut sum = T::zero();
    for &v in row {
        sum += (v - max).exp();
    }
    let lse = max + sum.ln();
    for (o, &v) in out.iter_mut().zip(row) {
        *o = v - lse;
    }
}

/// Row-wise softmax.
pub fn softmax_rows<T: Real>(logits: &Matrix<T>) -> Matrix<T> {
    let mut out = logits.clone();
    let cols = out.cols();
    for_each_row(out.as_mut_slice(), cols, |_, row| {
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let mut sum = T::zero();
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    });
    out
}

fn check_mask(mask: &[usize], rows: usize, what: &str) -> Result<()> {
    if mask.is_empty() {
        return Err(Error::contract(alloc::format!("{what}: empty mask")));
    }
    if let Some(&bad) = mask.iter().find(|&&i| i >= rows) {
        return Err(Error::contract(alloc::format!(
            "{what}: mask index {bad} out of range for {rows} rows"
        )));
    }
    Ok(())
}

/// Mean cross-entropy over the masked rows against one-hot targets.
///
/// The gradient w.r.t. the logits is `(softmax - onehot) / |mask|` on masked
/// rows and zero elsewhere.
pub fn masked_cross_entropy<T: Real>(logits: &Matrix<T>, onehot: &Matrix<T>, mask: &[usize]) -> Result<GradPair<T>> {
    if logits.shape() != onehot.shape() {
        return Err(Error::dim("masked_cross_entropy", logits.shape(), onehot.shape()));
    }
    check_mask(mask, logits.rows(), "masked_cross_entropy")?;
    let c = logits.cols();
    let inv = T::one() / T::lit(mask.len() as f64);
    let mut grad = Matrix::zeros(logits.rows(), c);
    let mut logp: Vec<T> = alloc::vec![T::zero(); c];
    let mut value = T::zero();
    for &i in mask {
        let target = onehot.row(i);
        let ones = target.iter().filter(|&&v| v == T::one()).count();
        let zeros = target.iter().filter(|&&v| v == T::zero()).count();
        if ones != 1 || zeros != c - 1 {
            return Err(Error::validation(alloc::format!(
                "masked_cross_entropy: target row {i} is not one-hot"
            )));
        }
        log_softmax_row(logits.row(i), &mut logp);
        let g = grad.row_mut(i);
        for j in 0..c {
            if target[j] == T::one() {
                value -= logp[j];
            }
            g[j] += (logp[j].exp() - target[j]) * inv;
        }
    }
    Ok(GradPair::single(value * inv, LOGITS, grad))
}

/// Mean KL divergence `KL(teacher || softmax(student_logits))` over the mask.
///
/// The teacher is treated as a constant; the gradient w.r.t. the student
/// logits is `(softmax - teacher) / |mask|` on masked rows.
pub fn kl_divergence<T: Real>(
    teacher_probs: &Matrix<T>,
    student_logits: &Matrix<T>,
    mask: &[usize],
) -> Result<GradPair<T>> {
    if teacher_probs.shape() != student_logits.shape() {
        return Err(Error::dim(
            "kl_divergence",
            teacher_probs.shape(),
            student_logits.shape(),
        ));
    }
    check_mask(mask, student_logits.rows(), "kl_divergence")?;
    let c = student_logits.cols();
    let inv = T::one() / T::lit(mask.len() as f64);
    let mut grad = Matrix::zeros(student_logits.rows(), c);
    let mut logp: Vec<T> = alloc::vec![T::zero(); c];
    let mut value = T::zero();
    for &i in mask {
        let t = teacher_probs.row(i);
        let total: T = t.iter().copied().sum();
        if (total.as_f64() - 1.0).abs() > 1e-5 || t.iter().any(|&v| v < T::zero()) {
            return Err(Error::validation(alloc::format!(
                "kl_divergence: teacher row {i} is not a distribution (sum {total})"
            )));
        }
        log_softmax_row(student_logits.row(i), &mut logp);
        let g = grad.row_mut(i);
        for j in 0..c {
            if t[j] > T::zero() {
                value += t[j] * (t[j].ln() - logp[j]);
            }
            g[j] += (logp[j].exp() - t[j]) * inv;
        }
    }
    Ok(GradPair::single(value * inv, LOGITS, grad))
}

/// Soft-target cross-entropy `-(1/normalizer) * sum_rows sum_c y_c ln s_c`.
///
/// Rows of `targets` need not be one-hot; the gradient is
/// `(softmax * sum(y) - y) / normalizer`.
pub fn soft_cross_entropy<T: Real>(logits: &Matrix<T>, targets: &Matrix<T>, normalizer: usize) -> Result<GradPair<T>> {
    if logits.shape() != targets.shape() {
        return Err(Error::dim("soft_cross_entropy", logits.shape(), targets.shape()));
    }
    if normalizer == 0 {
        return Err(Error::contract("soft_cross_entropy: zero normalizer"));
    }
    let c = logits.cols();
    let inv = T::one() / T::lit(normalizer as f64);
    let mut grad = Matrix::zeros(logits.rows(), c);
    let mut logp: Vec<T> = alloc::vec![T::zero(); c];
    let mut value = T::zero();
    for i in 0..logits.rows() {
        let y = targets.row(i);
        let mass: T = y.iter().copied().sum();
        log_softmax_row(logits.row(i), &mut logp);
        let g = grad.row_mut(i);
        for j in 0..c {
            if y[j] != T::zero() {
                value -= y[j] * logp[j];
            }
            g[j] = (logp[j].exp() * mass - y[j]) * inv;
        }
    }
    Ok(GradPair::single(value * inv, LOGITS, grad))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: &[&[f64]]) -> Matrix<f64> {
        Matrix::from_rows(rows).unwrap()
    }

    #[test]
    fn softmax_uniform_and_analytic_rows() {
        let s = softmax_rows(&m(&[&[0.0, 0.0, 0.0]]));
        for &v in s.as_slice() {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
        for c in [-50.0, 0.0, 3.7, 700.0] {
            let s = softmax_rows(&m(&[&[c, c + core::f64::consts::LN_2]]));
            assert!((s.get(0, 0) - 1.0 / 3.0).abs() < 1e-12);
            assert!((s.get(0, 1) - 2.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn softmax_one_two_three() {
        // exp(k) / (e + e^2 + e^3), evaluated at 50 digits.
        let s = softmax_rows(&m(&[&[1.0, 2.0, 3.0]]));
        let want = [
            0.090_030_573_170_380_46,
            0.244_728_471_054_797_64,
            0.665_240_955_774_821_9,
        ];
        for (a, b) in s.as_slice().iter().zip(want) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn softmax_large_magnitudes_stay_normalized() {
        let s = softmax_rows(&m(&[&[1e4, -1e4, 9999.0]]));
        assert!(s.is_finite());
        let sum: f64 = s.row(0).iter().sum();
        assert!((sum - 1.0).abs() < 1e-6);
    }

    #[test]
    fn cross_entropy_cases() {
        let y = m(&[&[1.0, 0.0, 0.0]]);
        let perfect = masked_cross_entropy(&m(&[&[30.0, 0.0, 0.0]]), &y, &[0]).unwrap();
        assert!(perfect.value < 1e-9);

        let y4 = m(&[&[0.0, 1.0, 0.0, 0.0], &[0.0, 0.0, 0.0, 1.0]]);
        let uniform = masked_cross_entropy(&Matrix::zeros(2, 4), &y4, &[0, 1]).unwrap();
        assert!((uniform.value - 4f64.ln()).abs() < 1e-14);

        // -ln(0.6652409557748219)
        let ce = masked_cross_entropy(&m(&[&[1.0, 2.0, 3.0]]), &m(&[&[0.0, 0.0, 1.0]]), &[0]).unwrap();
        assert!((ce.value - 0.407_605_964_444_380_1).abs() < 1e-12);
    }

    #[test]
    fn cross_entropy_gradient_is_zero_off_mask() {
        let logits = m(&[&[1.0, 2.0], &[0.5, -0.5], &[3.0, 0.0]]);
        let y = m(&[&[1.0, 0.0], &[0.0, 1.0], &[1.0, 0.0]]);
        let gp = masked_cross_entropy(&logits, &y, &[0, 2]).unwrap();
        let g = gp.grad(LOGITS).unwrap();
        assert_eq!(g.row(1), &[0.0, 0.0]);
        let s = softmax_rows(&logits);
        assert!((g.get(0, 0) - (s.get(0, 0) - 1.0) / 2.0).abs() < 1e-15);
    }

    #[test]
    fn cross_entropy_rejects_empty_mask_and_bad_targets() {
        let logits = Matrix::<f64>::zeros(2, 2);
        let y = m(&[&[1.0, 0.0], &[0.5, 0.5]]);
        assert!(matches!(
            masked_cross_entropy(&logits, &y, &[]),
            Err(Error::Contract(_))
        ));
        assert!(matches!(
            masked_cross_entropy(&logits, &y, &[1]),
            Err(Error::Validation(_))
        ));
        assert!(matches!(
            masked_cross_entropy(&logits, &y, &[2]),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn kl_cases() {
        let logits = m(&[&[0.3, -1.2, 2.0], &[0.0, 0.1, 0.2]]);
        let same = kl_divergence(&softmax_rows(&logits), &logits, &[0, 1]).unwrap();
        assert!(same.value.abs() < 1e-12);

        let onehot = m(&[&[0.0, 1.0, 0.0]]);
        let v = kl_divergence(&onehot, &Matrix::zeros(1, 3), &[0]).unwrap();
        assert!((v.value - 3f64.ln()).abs() < 1e-14);

        // 0.7 ln 1.4 + 0.3 ln 0.6
        let v = kl_divergence(&m(&[&[0.7, 0.3]]), &Matrix::zeros(1, 2), &[0]).unwrap();
        assert!((v.value - 0.082_282_878_505_051_3).abs() < 1e-12);
    }

    #[test]
    fn kl_rejects_unnormalized_teacher() {
        let t = m(&[&[0.7, 0.4]]);
        assert!(matches!(
            kl_divergence(&t, &Matrix::zeros(1, 2), &[0]),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn soft_ce_half_half() {
        let v = soft_cross_entropy(&Matrix::zeros(1, 2), &m(&[&[0.5, 0.5]]), 1).unwrap();
        assert!((v.value - core::f64::consts::LN_2).abs() < 1e-15);
        assert!(soft_cross_entropy(&Matrix::<f64>::zeros(1, 2), &m(&[&[0.5, 0.5]]), 0).is_err());
    }

    #[test]
    fn grad_pair_add_merges_keys() {
        let a = GradPair::single(1.0, "w", m(&[&[1.0, 2.0]]));
        let b = GradPair::single(2.0, "w", m(&[&[0.5, 0.5]]))
            .add(GradPair::single(0.0, "b", m(&[&[3.0]])))
            .unwrap();
        let s = a.add(b).unwrap().scaled(2.0);
        assert_eq!(s.value, 6.0);
        assert_eq!(s.grad("w").unwrap().as_slice(), &[3.0, 5.0]);
        assert_eq!(s.grad("b").unwrap().as_slice(), &[6.0]);
    }
}
