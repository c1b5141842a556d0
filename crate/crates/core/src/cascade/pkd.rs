use crate::error::{Error, Result};
use crate::numkit::{kl_divergence, masked_cross_entropy, GradPair, Matrix, LOGITS};
use crate::real::Real;

/// Weights of the distillation loss for student `k`:
/// `k^beta * (alpha * CE(labeled) + (1 - alpha) * KL(teacher || student))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PkdConfig {
    pub alpha: f64,
    pub beta: f64,
}

impl Default for PkdConfig {
    fn default() -> Self {
        PkdConfig { alpha: 0.5, beta: 0.8 }
    }
}

impl PkdConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::validation(alloc::format!("alpha {} outside [0, 1]", self.alpha)));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(Error::validation(alloc::format!(
                "beta {} must be finite and >= 0",
                self.beta
            )));
        }
        Ok(())
    }

    /// `k^beta` for the 1-based student index `k`.
    pub fn multiplier(&self, k: usize) -> f64 {
        libm::pow(k as f64, self.beta)
    }
}

/// Distillation loss of student `k` (1-based) and its gradient w.r.t. the logits.
///
/// Cross-entropy is averaged over `labeled`, KL over `all_nodes`. A term whose
/// weight is zero is skipped entirely.
pub fn pkd_loss<T: Real>(
    logits: &Matrix<T>,
    z_g: &Matrix<T>,
    y: &Matrix<T>,
    labeled: &[usize],
    all_nodes: &[usize],
    k: usize,
    cfg: &PkdConfig,
) -> Result<GradPair<T>> {
    if k == 0 {
        return Err(Error::contract("student index k is 1-based"));
    }
    cfg.validate()?;
    let alpha = T::lit(cfg.alpha);
    let mut total = GradPair::single(T::zero(), LOGITS, Matrix::zeros(logits.rows(), logits.cols()));
    if cfg.alpha > 0.0 {
        if labeled.is_empty() {
            return Err(Error::contract("pkd_loss: empty labeled set with alpha > 0"));
        }
        total = total.add(masked_cross_entropy(logits, y, labeled)?.scaled(alpha))?;
    }
    if cfg.alpha < 1.0 {
        total = total.add(kl_divergence(z_g, logits, all_nodes)?.scaled(T::one() - alpha))?;
    }
    Ok(total.scaled(T::lit(cfg.multiplier(k))))
}
