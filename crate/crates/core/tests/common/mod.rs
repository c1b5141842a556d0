#![allow(dead_code)]

use gnn2mlp_core::cascade::StudentParams;
use gnn2mlp_core::graph::{synth_sbm, Graph, SbmSpec};
use gnn2mlp_core::rng;
use gnn2mlp_core::Matrix;
use rand::Rng;

pub fn random_matrix(seed: u64, rows: usize, cols: usize, scale: f64) -> Matrix<f64> {
    let mut r = rng::stream(seed, &[99]);
    Matrix::from_fn(rows, cols, |_, _| r.random_range(-scale..scale))
}

pub fn random_probs(seed: u64, rows: usize, cols: usize) -> Matrix<f64> {
    let mut m = random_matrix(seed, rows, cols, 1.0).map(|v| v.exp());
    for i in 0..rows {
        let s: f64 = m.row(i).iter().sum();
        for v in m.row_mut(i) {
            *v /= s;
        }
    }
    m
}

pub fn random_classes(seed: u64, n: usize, c: usize) -> Vec<usize> {
    let mut r = rng::stream(seed, &[98]);
    (0..n).map(|_| r.random_range(0..c)).collect()
}

/// Student with random biases so ReLU inputs are generic.
pub fn random_student(seed: u64, d: usize, hidden: usize, c: usize, layers: usize) -> StudentParams<f64> {
    let mut p = StudentParams::init(d, hidden, c, layers, seed).unwrap();
    for (i, l) in p.layers.iter_mut().enumerate() {
        l.bias = random_matrix(seed ^ (i as u64 + 11), 1, l.bias.cols(), 0.5);
    }
    p
}

pub fn separable(n: usize, seed: u64) -> Graph<f64> {
    synth_sbm(&SbmSpec {
        n_nodes: n,
        n_classes: 3,
        feat_dim: 12,
        p_in: 0.2,
        p_out: 0.01,
        feat_noise: 0.1,
        seed,
    })
    .unwrap()
}

pub fn noisy(n: usize, seed: u64) -> Graph<f64> {
    synth_sbm(&SbmSpec {
        n_nodes: n,
        n_classes: 3,
        feat_dim: 16,
        p_in: 0.15,
        p_out: 0.02,
        feat_noise: 1.5,
        seed,
    })
    .unwrap()
}
