//! Graph-convolution teacher: `logits = A_hat relu(A_hat X W1 + b1) W2 + b2`
//! (deeper stacks repeat the hidden block), trained full-batch with AdamW on
//! the labeled nodes and early-stopped on validation accuracy.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::fingerprint::Fingerprint;
use crate::graph::{normalize_adjacency, Graph};
use crate::nn::{self, Dense};
use crate::numkit::{
    masked_cross_entropy, matmul, matmul_nt, matmul_tn, softmax_rows, spmm, spmm_t, GradPair, Matrix, SparseMatrix,
    LOGITS,
};
use crate::optim::{AdamConfig, AdamW};
use crate::real::Real;
use crate::rng::{self, Rng};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TeacherConfig {
    pub hidden_dim: usize,
    /// Number of graph-convolution layers (2 or 3).
    pub depth: usize,
    pub lr: f64,
    pub weight_decay: f64,
    /// Applied to the input features and to every hidden layer.
    pub dropout: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
}

impl Default for TeacherConfig {
    fn default() -> Self {
        TeacherConfig {
            hidden_dim: 64,
            depth: 2,
            lr: 0.01,
            weight_decay: 5e-4,
            dropout: 0.5,
            max_epochs: 200,
            patience: 50,
            seed: 0,
        }
    }
}

impl TeacherConfig {
    pub fn validate(&self) -> Result<()> {
        if !(2..=3).contains(&self.depth) {
            return Err(Error::validation("teacher depth must be 2 or 3"));
        }
        if self.hidden_dim == 0 {
            return Err(Error::validation("teacher hidden dimension must be positive"));
        }
        if self.patience >= self.max_epochs {
            return Err(Error::validation("teacher patience must be smaller than max_epochs"));
        }
        if !(self.lr.is_finite() && self.lr > 0.0 && self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return Err(Error::validation(
                "teacher lr must be positive and weight decay non-negative",
            ));
        }
        nn::check_dropout(self.dropout)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TeacherParams<T> {
    pub layers: Vec<Dense<T>>,
}

impl<T: Real> TeacherParams<T> {
    pub fn init(feat_dim: usize, hidden_dim: usize, n_classes: usize, depth: usize, seed: u64) -> Self {
        let mut r = rng::stream(seed, &[rng::TAG_INIT]);
        let mut layers = Vec::with_capacity(depth);
        let mut fan_in = feat_dim;
        for l in 0..depth {
            let fan_out = if l + 1 == depth { n_classes } else { hidden_dim };
            layers.push(Dense::glorot(fan_in, fan_out, &mut r));
            fan_in = fan_out;
        }
        TeacherParams { layers }
    }

    pub fn hidden_dim(&self) -> usize {
        self.layers[0].fan_out()
    }

    pub fn feat_dim(&self) -> usize {
        self.layers[0].fan_in()
    }

    pub fn n_classes(&self) -> usize {
        self.layers.last().map_or(0, |l| l.fan_out())
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

struct GcnCache<T> {
    /// Layer inputs after dropout.
    inputs: Vec<Matrix<T>>,
    masks: Vec<Option<Matrix<T>>>,
    pre_acts: Vec<Matrix<T>>,
}

fn forward_cached<T: Real>(
    norm_adj: &SparseMatrix<T>,
    x: &Matrix<T>,
    p: &TeacherParams<T>,
    dropout: Option<(f64, &mut Rng)>,
) -> Result<(Matrix<T>, GcnCache<T>)> {
    if norm_adj.rows() != x.rows() || norm_adj.cols() != x.rows() {
        return Err(Error::dim("gcn_forward", norm_adj.shape(), x.shape()));
    }
    let depth = p.layers.len();
    let mut cache = GcnCache {
        inputs: Vec::with_capacity(depth),
        masks: Vec::with_capacity(depth),
        pre_acts: Vec::with_capacity(depth),
    };
    let mut h = x.clone();
    let mut drop = dropout;
    for (l, layer) in p.layers.iter().enumerate() {
        let mask = match drop.as_mut() {
            Some((rate, r)) if *rate > 0.0 => {
                let m: Matrix<T> = nn::dropout_mask(h.rows(), h.cols(), *rate, *r);
                nn::hadamard_in_place(&mut h, &m);
                Some(m)
            }
            _ => None,
        };
        let projected = matmul(&h, &layer.weight)?;
        let mut z = spmm(norm_adj, &projected)?;
        z.add_row_broadcast(&layer.bias)?;
        cache.inputs.push(h);
        cache.masks.push(mask);
        if l + 1 == depth {
            cache.pre_acts.push(z.clone());
            return Ok((z, cache));
        }
        let mut next = z.clone();
        nn::relu_in_place(&mut next);
        cache.pre_acts.push(z);
        h = next;
    }
    Err(Error::contract("teacher has no layers"))
}

fn backward<T: Real>(
    norm_adj: &SparseMatrix<T>,
    p: &TeacherParams<T>,
    cache: &GcnCache<T>,
    dlogits: &Matrix<T>,
) -> Result<Vec<Dense<T>>> {
    let depth = p.layers.len();
    let mut grads: Vec<Dense<T>> = Vec::with_capacity(depth);
    let mut dz = dlogits.clone();
    for l in (0..depth).rev() {
        let bias = dz.col_sums();
        let dproj = spmm_t(norm_adj, &dz)?;
        let weight = matmul_tn(&cache.inputs[l], &dproj)?;
        grads.push(Dense { weight, bias });
        if l == 0 {
            break;
        }
        let mut dh = matmul_nt(&dproj, &p.layers[l].weight)?;
        if let Some(mask) = &cache.masks[l] {
            nn::hadamard_in_place(&mut dh, mask);
        }
        for (g, &z) in dh.as_mut_slice().iter_mut().zip(cache.pre_acts[l - 1].as_slice()) {
            if z <= T::zero() {
                *g = T::zero();
            }
        }
        dz = dh;
    }
    grads.reverse();
    Ok(grads)
}

/// Teacher logits. Dropout (input and hidden) is applied only when `training`.
pub fn gcn_forward<T: Real>(
    norm_adj: &SparseMatrix<T>,
    x: &Matrix<T>,
    p: &TeacherParams<T>,
    training: bool,
    dropout: f64,
    seed: u64,
) -> Result<Matrix<T>> {
    if x.cols() != p.feat_dim() {
        return Err(Error::dim("gcn_forward", x.shape(), p.layers[0].weight.shape()));
    }
    if !training {
        return forward_eval(norm_adj, x, p);
    }
    nn::check_dropout(dropout)?;
    let mut r = rng::stream(seed, &[rng::TAG_DROPOUT]);
    Ok(forward_cached(norm_adj, x, p, Some((dropout, &mut r)))?.0)
}

/// Cache-free evaluation forward; same arithmetic as [`forward_cached`].
fn forward_eval<T: Real>(norm_adj: &SparseMatrix<T>, x: &Matrix<T>, p: &TeacherParams<T>) -> Result<Matrix<T>> {
    if norm_adj.rows() != x.rows() || norm_adj.cols() != x.rows() {
        return Err(Error::dim("gcn_forward", norm_adj.shape(), x.shape()));
    }
    let (last, hidden) = p
        .layers
        .split_last()
        .ok_or_else(|| Error::contract("teacher has no layers"))?;
    let layer = |h: &Matrix<T>, l: &nn::Dense<T>| -> Result<Matrix<T>> {
        let mut z = spmm(norm_adj, &matmul(h, &l.weight)?)?;
        z.add_row_broadcast(&l.bias)?;
        Ok(z)
    };
    let mut h = None;
    for l in hidden {
        let mut z = layer(h.as_ref().unwrap_or(x), l)?;
        nn::relu_in_place(&mut z);
        h = Some(z);
    }
    layer(h.as_ref().unwrap_or(x), last)
}

/// Masked cross-entropy of the teacher logits and its gradient w.r.t. every
/// parameter (`layer{i}.weight`, `layer{i}.bias`) plus the logits.
#[allow(clippy::too_many_arguments)]
pub fn gcn_loss<T: Real>(
    norm_adj: &SparseMatrix<T>,
    x: &Matrix<T>,
    p: &TeacherParams<T>,
    onehot: &Matrix<T>,
    mask: &[usize],
    training: bool,
    dropout: f64,
    seed: u64,
) -> Result<GradPair<T>> {
    let mut r = rng::stream(seed, &[rng::TAG_DROPOUT]);
    let drop = if training { Some((dropout, &mut r)) } else { None };
    let (logits, cache) = forward_cached(norm_adj, x, p, drop)?;
    let ce = masked_cross_entropy(&logits, onehot, mask)?;
    let grads = backward(norm_adj, p, &cache, ce.grad(LOGITS).expect("loss reports logits"))?;
    let mut out = ce;
    let names = nn::param_names(grads.len());
    for (name, m) in names
        .into_iter()
        .zip(grads.into_iter().flat_map(|d| [d.weight, d.bias]))
    {
        out.grads.insert(name, m);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TeacherMeta {
    pub epochs: usize,
    pub best_epoch: usize,
    pub best_val_accuracy: f64,
    pub seed: u64,
    /// Training loss per epoch.
    pub losses: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TeacherArtifact<T> {
    pub params: TeacherParams<T>,
    /// Row-stochastic soft labels (post-softmax teacher outputs), `N x C`.
    pub soft_labels: Matrix<T>,
    pub meta: TeacherMeta,
}

impl<T: Real> TeacherArtifact<T> {
    /// Fingerprint of the soft labels, recorded by cascades distilled from them.
    pub fn soft_label_fingerprint(&self) -> u64 {
        soft_label_fingerprint(&self.soft_labels)
    }
}

pub fn soft_label_fingerprint<T: Real>(soft_labels: &Matrix<T>) -> u64 {
    Fingerprint::new().matrix(soft_labels).finish()
}

/// Eval-mode predictions (`softmax` of the logits).
pub fn predict<T: Real>(norm_adj: &SparseMatrix<T>, x: &Matrix<T>, p: &TeacherParams<T>) -> Result<Matrix<T>> {
    Ok(softmax_rows(&gcn_forward(norm_adj, x, p, false, 0.0, 0)?))
}

/// Train the teacher on `g.splits().labeled`, keep the checkpoint with the
/// best validation accuracy (earliest on ties) and export its soft labels.
pub fn train_teacher<T: Real>(g: &Graph<T>, cfg: &TeacherConfig) -> Result<TeacherArtifact<T>> {
    cfg.validate()?;
    let splits = g.splits();
    if splits.labeled.is_empty() || splits.validation.is_empty() {
        return Err(Error::validation(
            "teacher training needs non-empty labeled and validation sets",
        ));
    }
    let norm_adj = normalize_adjacency(g.adjacency())?;
    let x = g.features();
    let mut params = TeacherParams::init(g.feat_dim(), cfg.hidden_dim, g.n_classes(), cfg.depth, cfg.seed);
    let shapes: Vec<(usize, usize)> = params.matrices().iter().map(|m| m.shape()).collect();
    let mut opt = AdamW::new(AdamConfig::new(cfg.lr, cfg.weight_decay), &shapes);

    let mut best = params.clone();
    let mut best_acc = -1.0f64;
    let mut best_epoch = 0;
    let mut losses = Vec::with_capacity(cfg.max_epochs);
    let mut epochs = 0;
    for epoch in 1..=cfg.max_epochs {
        epochs = epoch;
        let mut r = rng::stream(cfg.seed, &[rng::TAG_DROPOUT, epoch as u64]);
        let (logits, cache) = forward_cached(&norm_adj, x, &params, Some((cfg.dropout, &mut r)))?;
        let ce = masked_cross_entropy(&logits, g.labels(), &splits.labeled)?;
        if !ce.value.is_finite() {
            return Err(Error::Training {
                student: None,
                epoch,
                component: "cross-entropy",
            });
        }
        losses.push(ce.value.as_f64());
        let grads = backward(
            &norm_adj,
            &params,
            &cache,
            ce.grad(LOGITS).expect("loss reports logits"),
        )?;
        let grad_refs: Vec<&Matrix<T>> = grads.iter().flat_map(|d| [&d.weight, &d.bias]).collect();
        opt.step(&mut nn::params_mut(&mut params.layers), &grad_refs)?;
        if !params.layers.iter().all(Dense::is_finite) {
            return Err(Error::Training {
                student: None,
                epoch,
                component: "cross-entropy",
            });
        }

        let eval = gcn_forward(&norm_adj, x, &params, false, 0.0, 0)?;
        let acc = nn::argmax_accuracy(&eval.argmax_rows(), g.classes(), &splits.validation);
        if acc > best_acc {
            best_acc = acc;
            best_epoch = epoch;
            best = params.clone();
        } else if epoch - best_epoch >= cfg.patience {
            break;
        }
    }

    let soft_labels = predict(&norm_adj, x, &best)?;
    Ok(TeacherArtifact {
        params: best,
        soft_labels,
        meta: TeacherMeta {
            epochs,
            best_epoch,
            best_val_accuracy: best_acc,
            seed: cfg.seed,
            losses,
        },
    })
}

/// Accuracy of `soft_labels` on each of the given index sets.
pub fn split_accuracy<T: Real>(pred: &Matrix<T>, classes: &[usize], idx: &[usize]) -> f64 {
    nn::argmax_accuracy(&pred.argmax_rows(), classes, idx)
}
