use alloc::vec::Vec;

use rand::seq::SliceRandom;

use super::student::{backward, forward_input, StudentParams};
use crate::error::{Error, Result};
use crate::nn;
use crate::numkit::{soft_cross_entropy, GradPair, Matrix, LOGITS};
use crate::real::Real;
use crate::rng;

/// Largest mixing rate; at 0.5 a mixed sample is an even blend of its pair.
pub const LAMBDA_MAX: f64 = 0.5;

/// Direction of the mixing-rate update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LambdaSign {
    /// `lambda += gamma * (ema - tau)`: the rate grows while the loss is above `tau`.
    #[default]
    Formula,
    /// `lambda += gamma * (tau - ema)`: the rate grows as the loss falls below `tau`.
    Inverted,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixupConfig {
    pub lambda_init: f64,
    pub gamma: f64,
    pub tau: f64,
    pub sigma: f64,
    pub sign: LambdaSign,
}

impl Default for MixupConfig {
    fn default() -> Self {
        MixupConfig {
            lambda_init: 0.1,
            gamma: 0.9,
            tau: 0.1,
            sigma: 0.1,
            sign: LambdaSign::Formula,
        }
    }
}

impl MixupConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=LAMBDA_MAX).contains(&self.lambda_init) {
            return Err(Error::validation(alloc::format!(
                "lambda_init {} outside [0, 0.5]",
                self.lambda_init
            )));
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(Error::validation("gamma must be finite and non-negative"));
        }
        if !(0.0..=1.0).contains(&self.sigma) {
            return Err(Error::validation("sigma must lie in [0, 1]"));
        }
        if !self.tau.is_finite() {
            return Err(Error::validation("tau must be finite"));
        }
        Ok(())
    }

    pub fn initial_state(&self) -> MixupState {
        MixupState {
            lambda: self.lambda_init,
            ema_loss: 0.0,
            gamma: self.gamma,
            tau: self.tau,
            sigma: self.sigma,
            sign: self.sign,
            initialized: false,
        }
    }
}

/// Adaptive mixing rate and the moving average of the mixup loss that drives it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixupState {
    pub lambda: f64,
    pub ema_loss: f64,
    pub gamma: f64,
    pub tau: f64,
    pub sigma: f64,
    pub sign: LambdaSign,
    pub initialized: bool,
}

impl MixupState {
    /// Forget the moving average so the next observation re-seeds it.
    pub fn reset_average(self) -> Self {
        MixupState {
            initialized: false,
            ema_loss: 0.0,
            ..self
        }
    }
}

/// Fold `current_loss` into the moving average. The first observation
/// initializes it.
pub fn update_ema(state: MixupState, current_loss: f64) -> MixupState {
    if !state.initialized {
        return MixupState {
            ema_loss: current_loss,
            initialized: true,
            ..state
        };
    }
    MixupState {
        ema_loss: state.sigma * state.ema_loss + (1.0 - state.sigma) * current_loss,
        ..state
    }
}

/// `lambda <- clamp(lambda + gamma * (ema - tau), 0, 0.5)`. A state without
/// an observed loss is returned unchanged.
pub fn update_lambda(state: MixupState) -> MixupState {
    if !state.initialized {
        return state;
    }
    let drift = match state.sign {
        LambdaSign::Formula => state.ema_loss - state.tau,
        LambdaSign::Inverted => state.tau - state.ema_loss,
    };
    MixupState {
        lambda: (state.lambda + state.gamma * drift).clamp(0.0, LAMBDA_MAX),
        ..state
    }
}

/// Pair every labeled node with a partner drawn by a seeded uniform
/// permutation of the labeled set.
pub fn sample_mixup_pairs(labeled: &[usize], seed: u64) -> Result<Vec<(usize, usize)>> {
    if labeled.len() < 2 {
        return Err(Error::validation("mixup needs at least two labeled nodes"));
    }
    let mut partners = labeled.to_vec();
    partners.shuffle(&mut rng::stream(seed, &[rng::TAG_MIXUP_PAIRS]));
    Ok(labeled.iter().copied().zip(partners).collect())
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(0.0..=LAMBDA_MAX).contains(&lambda) {
        return Err(Error::contract(alloc::format!("mixing rate {lambda} outside [0, 0.5]")));
    }
    Ok(())
}

/// Mix rows of a prepared `[X | H_prev]` input and their label rows.
pub(crate) fn mix_rows<T: Real>(
    input: &Matrix<T>,
    y: &Matrix<T>,
    pairs: &[(usize, usize)],
    lambda: f64,
) -> Result<(Matrix<T>, Matrix<T>)> {
    check_lambda(lambda)?;
    if input.rows() != y.rows() {
        return Err(Error::dim("mixup_examples", input.shape(), y.shape()));
    }
    let n = input.rows();
    if let Some(&(i, j)) = pairs.iter().find(|&&(i, j)| i >= n || j >= n) {
        return Err(Error::contract(alloc::format!("mixup pair ({i}, {j}) out of range")));
    }
    let lam = T::lit(lambda);
    let rest = T::lit(1.0 - lambda);
    let blend = |m: &Matrix<T>| {
        Matrix::from_fn(pairs.len(), m.cols(), |r, c| {
            let (i, j) = pairs[r];
            lam * m.get(i, c) + rest * m.get(j, c)
        })
    };
    Ok((blend(input), blend(y)))
}

/// Mixed samples `lambda [x_i | h_i] + (1 - lambda) [x_j | h_j]` and labels
/// `lambda y_i + (1 - lambda) y_j` for every pair `(i, j)`.
pub fn mixup_examples<T: Real>(
    x: &Matrix<T>,
    h_prev: &Matrix<T>,
    y: &Matrix<T>,
    pairs: &[(usize, usize)],
    lambda: f64,
) -> Result<(Matrix<T>, Matrix<T>)> {
    mix_rows(&x.hconcat(h_prev)?, y, pairs, lambda)
}

/// Mixup loss: soft-label cross-entropy of the student on mixed samples,
/// summed over rows and divided by `labeled_count`. Gradients are keyed
/// `layer{i}.weight` / `layer{i}.bias`; the logits gradient is included.
pub fn pma_loss<T: Real>(
    p: &StudentParams<T>,
    mixed_inputs: &Matrix<T>,
    mixed_labels: &Matrix<T>,
    labeled_count: usize,
    dropout: f64,
    seed: u64,
) -> Result<GradPair<T>> {
    if labeled_count == 0 {
        return Err(Error::contract("pma_loss: labeled_count is zero"));
    }
    nn::check_dropout(dropout)?;
    let mut r = rng::stream(seed, &[rng::TAG_MIXUP_DROPOUT]);
    let (_, logits, cache) = forward_input(p, mixed_inputs, Some((dropout, &mut r)))?;
    let loss = soft_cross_entropy(&logits, mixed_labels, labeled_count)?;
    let grads = backward(p, &cache, loss.grad(LOGITS).expect("loss reports logits"))?;
    let mut out = loss;
    for (name, m) in nn::param_names(grads.len())
        .into_iter()
        .zip(grads.into_iter().flat_map(|d| [d.weight, d.bias]))
    {
        out.grads.insert(name, m);
    }
    Ok(out)
}
