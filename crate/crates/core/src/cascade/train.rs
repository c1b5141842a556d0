use alloc::vec::Vec;

use super::mixup::{mix_rows, sample_mixup_pairs, update_ema, update_lambda, MixupState};
use super::pkd::pkd_loss;
use super::student::{backward, concat_input, forward_input, StudentParams};
use super::CascadeConfig;
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::nn::{self, Dense};
use crate::numkit::{soft_cross_entropy, GradPair, Matrix, LOGITS};
use crate::optim::{AdamConfig, AdamW};
use crate::real::Real;
use crate::rng::{self, Rng};

/// Training record of one student.
#[derive(Debug, Clone, PartialEq)]
pub struct StudentMeta {
    pub epochs: usize,
    pub best_epoch: usize,
    pub best_val_accuracy: f64,
    /// Mixing rate used in each epoch.
    pub lambda_trajectory: Vec<f64>,
    pub final_lambda: f64,
    pub pkd_losses: Vec<f64>,
    pub pma_losses: Vec<f64>,
    /// Fingerprint of the parameters the student started from.
    pub init_fingerprint: u64,
}

pub struct StudentOutcome<T> {
    pub params: StudentParams<T>,
    /// Eval-mode hidden representation of the restored checkpoint.
    pub hidden: Matrix<T>,
    pub state: MixupState,
    pub meta: StudentMeta,
}

/// Everything the per-student objective needs besides the parameters.
pub(crate) struct Objective<'a, T> {
    pub input: &'a Matrix<T>,
    pub z_g: &'a Matrix<T>,
    pub y: &'a Matrix<T>,
    pub labeled: &'a [usize],
    pub all_nodes: &'a [usize],
    pub k: usize,
    pub cfg: &'a CascadeConfig,
}

pub(crate) struct LossParts<T> {
    pub pkd: f64,
    pub pma: f64,
    pub grads: Vec<Dense<T>>,
}

fn add_grads<T: Real>(acc: &mut [Dense<T>], other: &[Dense<T>]) -> Result<()> {
    for (a, b) in acc.iter_mut().zip(other) {
        a.weight.axpy(T::one(), &b.weight)?;
        a.bias.axpy(T::one(), &b.bias)?;
    }
    Ok(())
}

/// `L_k = L_pkd + L_pma` with both branches back-propagated.
pub(crate) fn total_loss<T: Real>(
    p: &StudentParams<T>,
    obj: &Objective<'_, T>,
    mixed: (&Matrix<T>, &Matrix<T>),
    drop_main: Option<(f64, &mut Rng)>,
    drop_mix: Option<(f64, &mut Rng)>,
    epoch: usize,
) -> Result<LossParts<T>> {
    let diverged = |component| Error::Training {
        student: Some(obj.k),
        epoch,
        component,
    };
    let (_, logits, cache) = forward_input(p, obj.input, drop_main)?;
    let pkd = pkd_loss(&logits, obj.z_g, obj.y, obj.labeled, obj.all_nodes, obj.k, &obj.cfg.pkd)?;
    if !pkd.value.is_finite() {
        return Err(diverged("PKD"));
    }
    let mut grads = backward(p, &cache, pkd.grad(LOGITS).expect("loss reports logits"))?;

    let (_, mix_logits, mix_cache) = forward_input(p, mixed.0, drop_mix)?;
    let pma = soft_cross_entropy(&mix_logits, mixed.1, obj.labeled.len())?;
    if !pma.value.is_finite() {
        return Err(diverged("PMA"));
    }
    let mix_grads = backward(p, &mix_cache, pma.grad(LOGITS).expect("loss reports logits"))?;
    add_grads(&mut grads, &mix_grads)?;
    Ok(LossParts {
        pkd: pkd.value.as_f64(),
        pma: pma.value.as_f64(),
        grads,
    })
}

/// Total student loss `L_pkd + L_pma` with gradients keyed by parameter name,
/// evaluated with dropout disabled and an explicit pair set and mixing rate.
#[allow(clippy::too_many_arguments)]
pub fn student_loss<T: Real>(
    p: &StudentParams<T>,
    x: &Matrix<T>,
    h_prev: &Matrix<T>,
    z_g: &Matrix<T>,
    y: &Matrix<T>,
    labeled: &[usize],
    k: usize,
    cfg: &CascadeConfig,
    pairs: &[(usize, usize)],
    lambda: f64,
) -> Result<GradPair<T>> {
    let input = concat_input(p, x, h_prev)?;
    let all: Vec<usize> = (0..x.rows()).collect();
    let (mixed_in, mixed_y) = mix_rows(&input, y, pairs, lambda)?;
    let obj = Objective {
        input: &input,
        z_g,
        y,
        labeled,
        all_nodes: &all,
        k,
        cfg,
    };
    let parts = total_loss(p, &obj, (&mixed_in, &mixed_y), None, None, 0)?;
    let mut out = GradPair {
        value: T::lit(parts.pkd + parts.pma),
        grads: Default::default(),
    };
    for (name, m) in nn::param_names(parts.grads.len())
        .into_iter()
        .zip(parts.grads.into_iter().flat_map(|d| [d.weight, d.bias]))
    {
        out.grads.insert(name, m);
    }
    Ok(out)
}

/// Train student `k` (1-based) starting from `init`.
///
/// Each epoch draws a fresh pair set, takes one AdamW step on `L_pkd + L_pma`,
/// folds the epoch's mixup loss into the moving average and updates the
/// mixing rate. Training stops after `patience` epochs without a validation
/// accuracy improvement; the best checkpoint (earliest on ties) is returned
/// with its eval-mode hidden representation.
#[allow(clippy::too_many_arguments)]
pub fn train_student<T: Real>(
    k: usize,
    g: &Graph<T>,
    z_g: &Matrix<T>,
    h_prev: &Matrix<T>,
    init: StudentParams<T>,
    cfg: &CascadeConfig,
    state: MixupState,
) -> Result<StudentOutcome<T>> {
    cfg.validate()?;
    if k == 0 {
        return Err(Error::contract("student index k is 1-based"));
    }
    if z_g.shape() != (g.n_nodes(), g.n_classes()) {
        return Err(Error::dim(
            "train_student (soft labels)",
            z_g.shape(),
            g.labels().shape(),
        ));
    }
    let splits = g.splits();
    if splits.validation.is_empty() {
        return Err(Error::validation("student training needs a non-empty validation set"));
    }
    let input = concat_input(&init, g.features(), h_prev)?;
    let all = g.all_nodes();
    let obj = Objective {
        input: &input,
        z_g,
        y: g.labels(),
        labeled: &splits.labeled,
        all_nodes: &all,
        k,
        cfg,
    };

    let init_fingerprint = init.fingerprint();
    let mut params = init;
    let mut opt = AdamW::new(AdamConfig::new(cfg.lr, cfg.weight_decay), &params.shape_vector());
    let mut state = state;
    let mut best = params.clone();
    let mut best_acc = -1.0f64;
    let mut best_epoch = 0;
    let mut meta = StudentMeta {
        epochs: 0,
        best_epoch: 0,
        best_val_accuracy: 0.0,
        lambda_trajectory: Vec::new(),
        final_lambda: state.lambda,
        pkd_losses: Vec::new(),
        pma_losses: Vec::new(),
        init_fingerprint,
    };
    let k_tag = k as u64;
    for epoch in 1..=cfg.max_epochs {
        meta.epochs = epoch;
        let e_tag = epoch as u64;
        let pairs = sample_mixup_pairs(&splits.labeled, rng::derive(cfg.seed, &[k_tag, e_tag]))?;
        let (mixed_in, mixed_y) = mix_rows(&input, g.labels(), &pairs, state.lambda)?;
        let mut r_main = rng::stream(cfg.seed, &[rng::TAG_DROPOUT, k_tag, e_tag]);
        let mut r_mix = rng::stream(cfg.seed, &[rng::TAG_MIXUP_DROPOUT, k_tag, e_tag]);
        let parts = total_loss(
            &params,
            &obj,
            (&mixed_in, &mixed_y),
            Some((cfg.dropout, &mut r_main)),
            Some((cfg.dropout, &mut r_mix)),
            epoch,
        )?;
        let grad_refs: Vec<&Matrix<T>> = parts.grads.iter().flat_map(|d| [&d.weight, &d.bias]).collect();
        opt.step(&mut nn::params_mut(&mut params.layers), &grad_refs)?;
        if !params.layers.iter().all(Dense::is_finite) {
            return Err(Error::Training {
                student: Some(k),
                epoch,
                component: "PKD+PMA",
            });
        }
        meta.lambda_trajectory.push(state.lambda);
        meta.pkd_losses.push(parts.pkd);
        meta.pma_losses.push(parts.pma);
        state = update_lambda(update_ema(state, parts.pma));

        let (_, logits, _) = forward_input(&params, &input, None)?;
        let acc = nn::argmax_accuracy(&logits.argmax_rows(), g.classes(), &splits.validation);
        if acc > best_acc {
            best_acc = acc;
            best_epoch = epoch;
            best = params.clone();
        } else if epoch - best_epoch >= cfg.patience {
            break;
        }
    }
    meta.best_epoch = best_epoch;
    meta.best_val_accuracy = best_acc;
    meta.final_lambda = state.lambda;
    let (hidden, _, _) = forward_input(&best, &input, None)?;
    Ok(StudentOutcome {
        params: best,
        hidden,
        state,
        meta,
    })
}
