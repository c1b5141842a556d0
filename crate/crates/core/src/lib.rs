//! Numeric core for progressive GNN-to-MLP distillation.
//!
//! A graph-convolution teacher is trained on a node-classification graph and
//! its soft labels are distilled into a cascade of warm-started MLP students.
//! Each student sees the raw node features concatenated with the hidden
//! representation of its predecessor, is trained on a `k^beta`-weighted mix of
//! cross-entropy and KL divergence, and is regularized by mixup whose mixing
//! rate adapts to a moving average of the mixup loss. At inference the
//! students run in order until a confidence, student-count or wall-clock rule
//! fires, and the executed students are combined by a confidence-weighted
//! ensemble.
//!
//! The crate is `no_std` (with `alloc`). Enable the `std` feature for a
//! monotonic wall clock and the `parallel` feature for row-parallel kernels.
//! Row-parallel kernels compute every output row exactly as the serial path
//! does, so results do not depend on the thread count.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod cascade;
pub mod error;
pub mod fingerprint;
pub mod graph;
pub mod inference;
pub mod nn;
pub mod numkit;
pub mod optim;
pub mod real;
pub mod rng;
pub mod teacher;

pub use error::{Error, Result};
pub use numkit::{GradPair, Matrix, SparseMatrix};
pub use real::Real;
