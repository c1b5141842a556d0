use alloc::vec::Vec;

use super::dense::Matrix;
use crate::error::{Error, Result};

/// Largest elementwise relative error between the analytic gradient reported
/// by `loss_fn` and a central-difference estimate.
///
/// `loss_fn` maps a parameter list to `(loss, gradients)` with gradients in
/// the same order and shapes as the parameters. The relative error of an
/// entry is `|analytic - numeric| / max(|analytic|, |numeric|, 1e-8)`.
pub fn finite_diff_check<F>(mut loss_fn: F, params: &[Matrix<f64>], epsilon: f64) -> Result<f64>
where
    F: FnMut(&[Matrix<f64>]) -> Result<(f64, Vec<Matrix<f64>>)>,
{
    if !(1e-7..=1e-4).contains(&epsilon) {
        return Err(Error::contract(alloc::format!(
            "finite_diff_check: epsilon {epsilon} outside [1e-7, 1e-4]"
        )));
    }
    let (value, analytic) = loss_fn(params)?;
    if !value.is_finite() {
        return Err(Error::NonFinite("finite_diff_check: loss at the base point".into()));
    }
    if analytic.len() != params.len() {
        return Err(Error::contract(
            "finite_diff_check: gradient count differs from parameter count",
        ));
    }
    for (g, p) in analytic.iter().zip(params) {
        if g.shape() != p.shape() {
            return Err(Error::dim("finite_diff_check", p.shape(), g.shape()));
        }
    }

    let mut probe: Vec<Matrix<f64>> = params.to_vec();
    let mut worst = 0.0f64;
    for t in 0..params.len() {
        for e in 0..params[t].as_slice().len() {
            let orig = params[t].as_slice()[e];
            probe[t].as_mut_slice()[e] = orig + epsilon;
            let (plus, _) = loss_fn(&probe)?;
            probe[t].as_mut_slice()[e] = orig - epsilon;
            let (minus, _) = loss_fn(&probe)?;
            probe[t].as_mut_slice()[e] = orig;
            if !plus.is_finite() || !minus.is_finite() {
                return Err(Error::NonFinite(alloc::format!(
                    "finite_diff_check: loss while probing parameter {t} entry {e}"
                )));
            }
            let numeric = (plus - minus) / (2.0 * epsilon);
            let a = analytic[t].as_slice()[e];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
            worst = worst.max(rel);
        }
    }
    Ok(worst)
}
