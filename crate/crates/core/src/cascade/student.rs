use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::fingerprint::Fingerprint;
use crate::nn::{self, Dense};
use crate::numkit::{matmul_hconcat, matmul_nt, matmul_tn, Matrix};
use crate::real::Real;
use crate::rng::{self, Rng};

/// MLP student: `L - 1` hidden layers of width `d'` with ReLU, then an affine
/// output layer. The first layer reads `[X | H_prev]`, so its input width is
/// `d + d'` for every student in a cascade.
#[derive(Debug, Clone, PartialEq)]
pub struct StudentParams<T> {
    pub layers: Vec<Dense<T>>,
    feat_dim: usize,
    hidden_dim: usize,
}

impl<T: Real> StudentParams<T> {
    pub fn init(feat_dim: usize, hidden_dim: usize, n_classes: usize, n_layers: usize, seed: u64) -> Result<Self> {
        if n_layers < 2 {
            return Err(Error::validation(
                "a student needs at least one hidden and one output layer",
            ));
        }
        if hidden_dim == 0 || n_classes == 0 {
            return Err(Error::validation("student widths must be positive"));
        }
        let mut r = rng::stream(seed, &[rng::TAG_INIT]);
        let mut layers = Vec::with_capacity(n_layers);
        layers.push(Dense::glorot(feat_dim + hidden_dim, hidden_dim, &mut r));
        for _ in 1..n_layers - 1 {
            layers.push(Dense::glorot(hidden_dim, hidden_dim, &mut r));
        }
        layers.push(Dense::glorot(hidden_dim, n_classes, &mut r));
        Ok(StudentParams {
            layers,
            feat_dim,
            hidden_dim,
        })
    }

    /// Wrap explicit layers, checking the width contract.
    pub fn from_layers(layers: Vec<Dense<T>>, feat_dim: usize) -> Result<Self> {
        if layers.len() < 2 {
            return Err(Error::validation("a student needs at least two layers"));
        }
        let hidden_dim = layers[0].fan_out();
        if layers[0].fan_in() != feat_dim + hidden_dim {
            return Err(Error::validation(alloc::format!(
                "first layer reads {} columns, expected d + d' = {}",
                layers[0].fan_in(),
                feat_dim + hidden_dim
            )));
        }
        for (l, layer) in layers.iter().enumerate().skip(1) {
            let last = l + 1 == layers.len();
            if layer.fan_in() != hidden_dim || (!last && layer.fan_out() != hidden_dim) {
                return Err(Error::validation(alloc::format!(
                    "layer {l} breaks the hidden width {hidden_dim}"
                )));
            }
        }
        for layer in &layers {
            if layer.bias.shape() != (1, layer.fan_out()) {
                return Err(Error::validation("bias must be a 1 x fan_out row"));
            }
        }
        Ok(StudentParams {
            layers,
            feat_dim,
            hidden_dim,
        })
    }

    pub fn feat_dim(&self) -> usize {
        self.feat_dim
    }

    pub fn hidden_dim(&self) -> usize {
        self.hidden_dim
    }

    pub fn input_dim(&self) -> usize {
        self.feat_dim + self.hidden_dim
    }

    pub fn n_classes(&self) -> usize {
        self.layers.last().map_or(0, Dense::fan_out)
    }

    pub fn n_layers(&self) -> usize {
        self.layers.len()
    }

    /// `(rows, cols)` of every weight and bias, in layer order.
    pub fn shape_vector(&self) -> Vec<(usize, usize)> {
        self.layers
            .iter()
            .flat_map(|l| [l.weight.shape(), l.bias.shape()])
            .collect()
    }

    pub fn matrices(&self) -> Vec<&Matrix<T>> {
        self.layers.iter().flat_map(|l| [&l.weight, &l.bias]).collect()
    }

    pub fn fingerprint(&self) -> u64 {
        let mut f = Fingerprint::new();
        for m in self.matrices() {
            f.matrix(m);
        }
        f.finish()
    }
}

/// Initialize the next student from a trained one. The copy owns its own
/// buffers; training it never touches `prev`.
pub fn warm_start<T: Real>(prev: &StudentParams<T>) -> StudentParams<T> {
    prev.clone()
}

pub(crate) struct MlpCache<T> {
    inputs: Vec<Matrix<T>>,
    masks: Vec<Option<Matrix<T>>>,
    pre_acts: Vec<Matrix<T>>,
}

/// Forward on a prepared `[X | H_prev]` input. Returns the post-ReLU output of
/// the last hidden layer (before dropout), the logits and the backward cache.
pub(crate) fn forward_input<T: Real>(
    p: &StudentParams<T>,
    input: &Matrix<T>,
    mut dropout: Option<(f64, &mut Rng)>,
) -> Result<(Matrix<T>, Matrix<T>, MlpCache<T>)> {
    if input.cols() != p.input_dim() {
        return Err(Error::dim("student_forward", input.shape(), p.layers[0].weight.shape()));
    }
    let n = p.layers.len();
    let mut cache = MlpCache {
        inputs: Vec::with_capacity(n),
        masks: Vec::with_capacity(n),
        pre_acts: Vec::with_capacity(n - 1),
    };
    let mut cur = input.clone();
    let mut hidden = None;
    for (l, layer) in p.layers.iter().enumerate() {
        let z = layer.forward(&cur)?;
        cache.inputs.push(cur);
        if l + 1 == n {
            let hidden = hidden.expect("at least one hidden layer");
            return Ok((hidden, z, cache));
        }
        let mut a = z.clone();
        nn::relu_in_place(&mut a);
        cache.pre_acts.push(z);
        if l + 2 == n {
            hidden = Some(a.clone());
        }
        let mask = match dropout.as_mut() {
            Some((rate, r)) if *rate > 0.0 => {
                let m: Matrix<T> = nn::dropout_mask(a.rows(), a.cols(), *rate, *r);
                nn::hadamard_in_place(&mut a, &m);
                Some(m)
            }
            _ => None,
        };
        cache.masks.push(mask);
        cur = a;
    }
    unreachable!("students have at least two layers")
}

pub(crate) fn backward<T: Real>(
    p: &StudentParams<T>,
    cache: &MlpCache<T>,
    dlogits: &Matrix<T>,
) -> Result<Vec<Dense<T>>> {
    let n = p.layers.len();
    let mut grads = Vec::with_capacity(n);
    let mut dz = dlogits.clone();
    for l in (0..n).rev() {
        let weight = matmul_tn(&cache.inputs[l], &dz)?;
        let bias = dz.col_sums();
        grads.push(Dense { weight, bias });
        if l == 0 {
            break;
        }
        let mut da = matmul_nt(&dz, &p.layers[l].weight)?;
        if let Some(mask) = &cache.masks[l - 1] {
            nn::hadamard_in_place(&mut da, mask);
        }
        for (g, &z) in da.as_mut_slice().iter_mut().zip(cache.pre_acts[l - 1].as_slice()) {
            if z <= T::zero() {
                *g = T::zero();
            }
        }
        dz = da;
    }
    grads.reverse();
    Ok(grads)
}

pub(crate) fn concat_input<T: Real>(p: &StudentParams<T>, x: &Matrix<T>, h_prev: &Matrix<T>) -> Result<Matrix<T>> {
    check_input(p, x, h_prev)?;
    x.hconcat(h_prev)
}

fn check_input<T: Real>(p: &StudentParams<T>, x: &Matrix<T>, h_prev: &Matrix<T>) -> Result<()> {
    if x.cols() != p.feat_dim() {
        return Err(Error::dim(
            "student_forward (features)",
            x.shape(),
            (x.rows(), p.feat_dim()),
        ));
    }
    if h_prev.cols() != p.hidden_dim() || h_prev.rows() != x.rows() {
        return Err(Error::dim(
            "student_forward (hidden)",
            h_prev.shape(),
            (x.rows(), p.hidden_dim()),
        ));
    }
    Ok(())
}

/// Student forward pass on `[x | h_prev]`; returns `(H_k, logits)`.
///
/// Dropout follows every hidden ReLU when `training`; `H_k` is the ReLU
/// output of the last hidden layer before dropout.
pub fn student_forward<T: Real>(
    p: &StudentParams<T>,
    x: &Matrix<T>,
    h_prev: &Matrix<T>,
    training: bool,
    dropout: f64,
    seed: u64,
) -> Result<(Matrix<T>, Matrix<T>)> {
    if !training {
        check_input(p, x, h_prev)?;
        return forward_eval(p, x, Some(h_prev));
    }
    let input = concat_input(p, x, h_prev)?;
    nn::check_dropout(dropout)?;
    let mut r = rng::stream(seed, &[rng::TAG_DROPOUT]);
    let (h, logits, _) = forward_input(p, &input, Some((dropout, &mut r)))?;
    Ok((h, logits))
}

/// Cache-free evaluation forward on `[x | h_prev]`; `None` is the zero
/// block fed to the first student. Same arithmetic as the training path.
pub(crate) fn forward_eval<T: Real>(
    p: &StudentParams<T>,
    x: &Matrix<T>,
    h_prev: Option<&Matrix<T>>,
) -> Result<(Matrix<T>, Matrix<T>)> {
    let (last, hidden_layers) = p.layers.split_last().expect("students have at least two layers");
    let first = &hidden_layers[0];
    let mut cur = matmul_hconcat(x, h_prev, &first.weight)?;
    cur.add_row_broadcast(&first.bias)?;
    nn::relu_in_place(&mut cur);
    for layer in &hidden_layers[1..] {
        cur = layer.forward(&cur)?;
        nn::relu_in_place(&mut cur);
    }
    let logits = last.forward(&cur)?;
    Ok((cur, logits))
}
