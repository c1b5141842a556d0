//! Dense and sparse kernels, numerically stable losses with analytic
//! gradients, and a central-difference gradient checker.

mod dense;
mod gradcheck;
mod loss;
mod sparse;

pub use dense::{matmul, matmul_hconcat, matmul_nt, matmul_tn, Matrix};
pub use gradcheck::finite_diff_check;
pub use loss::{
    kl_divergence, log_softmax_row, masked_cross_entropy, soft_cross_entropy, softmax_rows, GradPair, LOGITS,
};
pub use sparse::{spmm, spmm_t, SparseMatrix};

/// Apply `f(row_index, row)` to every `cols`-wide row of `out`.
///
/// With the `parallel` feature and more than one rayon thread the rows are
/// processed concurrently; each row is still computed by the same sequential
/// code, so the output is identical to the single-threaded result.
pub(crate) fn for_each_row<T, F>(out: &mut [T], cols: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync + Send,
{
    if cols == 0 {
        return;
    }
    #[cfg(feature = "parallel")]
    {
        if rayon::current_num_threads() > 1 {
            use rayon::prelude::*;
            out.par_chunks_mut(cols).enumerate().for_each(|(i, row)| f(i, row));
            return;
        }
    }
    for (i, row) in out.chunks_mut(cols).enumerate() {
        f(i, row);
    }
}
