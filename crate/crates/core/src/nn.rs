//! Building blocks shared by the teacher and the students: affine layers,
//! Glorot initialization and inverted dropout.

use alloc::vec::Vec;

use rand::Rng;

use crate::error::{Error, Result};
use crate::numkit::{matmul, Matrix};
use crate::real::Real;

/// Affine layer `x * weight + bias` with `weight: in x out`, `bias: 1 x out`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense<T> {
    pub weight: Matrix<T>,
    pub bias: Matrix<T>,
}

impl<T: Real> Dense<T> {
    pub fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Dense {
            weight: Matrix::zeros(fan_in, fan_out),
            bias: Matrix::zeros(1, fan_out),
        }
    }

    /// Uniform Glorot init `U(-a, a)`, `a = sqrt(6 / (fan_in + fan_out))`; zero bias.
    pub fn glorot<R: Rng>(fan_in: usize, fan_out: usize, rng: &mut R) -> Self {
        let limit = libm::sqrt(6.0 / (fan_in + fan_out).max(1) as f64);
        let weight = Matrix::from_fn(fan_in, fan_out, |_, _| {
            T::lit((rng.random::<f64>() * 2.0 - 1.0) * limit)
        });
        Dense {
            weight,
            bias: Matrix::zeros(1, fan_out),
        }
    }

    pub fn fan_in(&self) -> usize {
        self.weight.rows()
    }

    pub fn fan_out(&self) -> usize {
        self.weight.cols()
    }

    pub fn forward(&self, x: &Matrix<T>) -> Result<Matrix<T>> {
        let mut z = matmul(x, &self.weight)?;
        z.add_row_broadcast(&self.bias)?;
        Ok(z)
    }

    pub fn is_finite(&self) -> bool {
        self.weight.is_finite() && self.bias.is_finite()
    }
}

/// Collect `&mut` references to every weight and bias, layer by layer.
pub fn params_mut<T>(layers: &mut [Dense<T>]) -> Vec<&mut Matrix<T>> {
    layers.iter_mut().flat_map(|l| [&mut l.weight, &mut l.bias]).collect()
}

/// Parameter names matching the order of [`params_mut`].
pub fn param_names(n_layers: usize) -> Vec<alloc::string::String> {
    (0..n_layers)
        .flat_map(|i| [alloc::format!("layer{i}.weight"), alloc::format!("layer{i}.bias")])
        .collect()
}

pub fn relu_in_place<T: Real>(m: &mut Matrix<T>) {
    for v in m.as_mut_slice() {
        if *v < T::zero() {
            *v = T::zero();
        }
    }
}

/// Inverted-dropout mask: each entry is `0` with probability `rate`,
/// otherwise `1 / (1 - rate)`.
pub fn dropout_mask<T: Real, R: Rng>(rows: usize, cols: usize, rate: f64, rng: &mut R) -> Matrix<T> {
    let keep = T::lit(1.0 / (1.0 - rate));
    Matrix::from_fn(
        rows,
        cols,
        |_, _| {
            if rng.random::<f64>() < rate {
                T::zero()
            } else {
                keep
            }
        },
    )
}

pub fn hadamard_in_place<T: Real>(m: &mut Matrix<T>, mask: &Matrix<T>) {
    debug_assert_eq!(m.shape(), mask.shape());
    for (v, &k) in m.as_mut_slice().iter_mut().zip(mask.as_slice()) {
        *v *= k;
    }
}

pub fn check_dropout(rate: f64) -> Result<()> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::contract(alloc::format!("dropout rate {rate} outside [0, 1)")));
    }
    Ok(())
}

/// Fraction of `idx` whose argmax prediction equals the label.
pub(crate) fn argmax_accuracy(pred_class: &[usize], classes: &[usize], idx: &[usize]) -> f64 {
    if idx.is_empty() {
        return 0.0;
    }
    let hits = idx.iter().filter(|&&i| pred_class[i] == classes[i]).count();
    hits as f64 / idx.len() as f64
}
