//! Node-classification graphs: feature matrix, symmetric adjacency, labels
//! and index splits, plus symmetric adjacency normalization, stratified split
//! generation and a stochastic-block-model generator.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::fingerprint::Fingerprint;
use crate::numkit::{Matrix, SparseMatrix};
use crate::real::Real;
use crate::rng;

/// Index splits. `unlabeled` is every node outside `labeled`, so it contains
/// the validation and test sets and any remaining nodes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Splits {
    pub labeled: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
    pub unlabeled: Vec<usize>,
}

impl Splits {
    /// Validate and canonicalize (sort) the three named sets for an `n`-node graph.
    pub fn new(n: usize, mut labeled: Vec<usize>, mut validation: Vec<usize>, mut test: Vec<usize>) -> Result<Self> {
        let mut owner = vec![0u8; n];
        for (tag, set, name) in [
            (1u8, &mut labeled, "labeled"),
            (2, &mut validation, "validation"),
            (3, &mut test, "test"),
        ] {
            set.sort_unstable();
            for &i in set.iter() {
                if i >= n {
                    return Err(Error::validation(alloc::format!(
                        "{name} index {i} out of range for {n} nodes"
                    )));
                }
                if owner[i] != 0 {
                    return Err(Error::validation(alloc::format!(
                        "node {i} appears twice across or within splits ({name})"
                    )));
                }
                owner[i] = tag;
            }
        }
        let unlabeled = (0..n).filter(|&i| owner[i] != 1).collect();
        Ok(Splits {
            labeled,
            validation,
            test,
            unlabeled,
        })
    }
}

/// Split sizes: labeled nodes per class, validation and test counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SplitSpec {
    pub per_class: usize,
    pub validation: usize,
    pub test: usize,
}

impl SplitSpec {
    /// 20 labeled nodes per class, 500 validation, 1000 test.
    pub const PLANETOID: SplitSpec = SplitSpec {
        per_class: 20,
        validation: 500,
        test: 1000,
    };

    /// Sizes used for generated graphs: `min(20, class_size / 5)` per class,
    /// a fifth of the nodes for validation and half for test.
    pub fn scaled(n_nodes: usize, n_classes: usize) -> SplitSpec {
        let class_size = n_nodes / n_classes.max(1);
        SplitSpec {
            per_class: 20.min(class_size / 5).max(1),
            validation: n_nodes / 5,
            test: n_nodes / 2,
        }
    }
}

/// Stratified labeled set plus validation/test drawn without replacement
/// from the remainder. Deterministic for a given seed.
pub fn make_splits(classes: &[usize], n_classes: usize, spec: SplitSpec, seed: u64) -> Result<Splits> {
    let mut r = rng::stream(seed, &[rng::TAG_SPLITS]);
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); n_classes];
    for (i, &c) in classes.iter().enumerate() {
        if c >= n_classes {
            return Err(Error::validation(alloc::format!("label {c} of node {i} out of range")));
        }
        by_class[c].push(i);
    }
    let mut labeled = Vec::with_capacity(spec.per_class * n_classes);
    let mut rest = Vec::new();
    for (c, nodes) in by_class.iter_mut().enumerate() {
        if nodes.len() < spec.per_class {
            return Err(Error::validation(alloc::format!(
                "class {c} has {} nodes, fewer than the {} labeled nodes requested",
                nodes.len(),
                spec.per_class
            )));
        }
        nodes.shuffle(&mut r);
        labeled.extend_from_slice(&nodes[..spec.per_class]);
        rest.extend_from_slice(&nodes[spec.per_class..]);
    }
    rest.sort_unstable();
    rest.shuffle(&mut r);
    if rest.len() < spec.validation + spec.test {
        return Err(Error::validation(alloc::format!(
            "{} unlabeled nodes cannot hold {} validation + {} test nodes",
            rest.len(),
            spec.validation,
            spec.test
        )));
    }
    let validation = rest[..spec.validation].to_vec();
    let test = rest[spec.validation..spec.validation + spec.test].to_vec();
    Splits::new(classes.len(), labeled, validation, test)
}

/// Graph with features `N x d`, symmetric 0/1 adjacency without self-loops,
/// one-hot labels `N x C` and index splits.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph<T> {
    features: Matrix<T>,
    adjacency: SparseMatrix<T>,
    classes: Vec<usize>,
    labels: Matrix<T>,
    n_classes: usize,
    splits: Splits,
}

impl<T: Real> Graph<T> {
    /// Edges are treated as undirected: each `(i, j)` is stored in both
    /// directions, duplicates collapse to one edge and self-loops are dropped.
    pub fn new(
        features: Matrix<T>,
        edges: &[(usize, usize)],
        classes: Vec<usize>,
        n_classes: usize,
        splits: Splits,
    ) -> Result<Self> {
        let n = features.rows();
        if classes.len() != n {
            return Err(Error::validation(alloc::format!(
                "{} labels for {n} feature rows",
                classes.len()
            )));
        }
        if !features.is_finite() {
            return Err(Error::NonFinite("node features".into()));
        }
        let labels = Matrix::one_hot(&classes, n_classes)?;
        let mut directed = Vec::with_capacity(edges.len() * 2);
        for &(i, j) in edges {
            if i >= n || j >= n {
                return Err(Error::validation(alloc::format!(
                    "edge ({i}, {j}) references a node outside 0..{n}"
                )));
            }
            if i != j {
                directed.push((i, j));
                directed.push((j, i));
            }
        }
        directed.sort_unstable();
        directed.dedup();
        let triplets: Vec<(usize, usize, T)> = directed.into_iter().map(|(i, j)| (i, j, T::one())).collect();
        let adjacency = SparseMatrix::from_triplets(n, n, &triplets)?;
        for set in [&splits.labeled, &splits.validation, &splits.test, &splits.unlabeled] {
            if set.iter().any(|&i| i >= n) {
                return Err(Error::validation("split index out of range"));
            }
        }
        Ok(Graph {
            features,
            adjacency,
            classes,
            labels,
            n_classes,
            splits,
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.features.rows()
    }

    pub fn feat_dim(&self) -> usize {
        self.features.cols()
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn features(&self) -> &Matrix<T> {
        &self.features
    }

    pub fn adjacency(&self) -> &SparseMatrix<T> {
        &self.adjacency
    }

    pub fn labels(&self) -> &Matrix<T> {
        &self.labels
    }

    pub fn classes(&self) -> &[usize] {
        &self.classes
    }

    pub fn splits(&self) -> &Splits {
        &self.splits
    }

    pub fn all_nodes(&self) -> Vec<usize> {
        (0..self.n_nodes()).collect()
    }

    pub fn with_splits(mut self, splits: Splits) -> Result<Self> {
        if splits.unlabeled.len() + splits.labeled.len() != self.n_nodes() {
            return Err(Error::validation("splits were built for a different node count"));
        }
        self.splits = splits;
        Ok(self)
    }

    /// Undirected edge list with `i < j`, in row-major order.
    pub fn undirected_edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.adjacency.nnz() / 2);
        for i in 0..self.n_nodes() {
            let (cols, _) = self.adjacency.row(i);
            out.extend(cols.iter().filter(|&&j| j > i).map(|&j| (i, j)));
        }
        out
    }

    /// Scale every feature row to unit L1 norm (all-zero rows stay zero).
    pub fn row_normalize_features(&mut self) {
        let cols = self.features.cols();
        for i in 0..self.features.rows() {
            let row = self.features.row_mut(i);
            let s: T = row.iter().map(|v| v.abs()).sum();
            if s > T::zero() {
                for v in row.iter_mut() {
                    *v /= s;
                }
            }
            debug_assert_eq!(row.len(), cols);
        }
    }

    /// Fingerprint of features, structure and labels (not splits).
    pub fn fingerprint(&self) -> u64 {
        let mut f = Fingerprint::new();
        f.matrix(&self.features);
        f.u64(self.n_classes as u64);
        for &c in &self.classes {
            f.u64(c as u64);
        }
        for (i, j) in self.undirected_edges() {
            f.u64(i as u64).u64(j as u64);
        }
        f.finish()
    }

    pub fn cast<U: Real>(&self) -> Graph<U> {
        Graph {
            features: self.features.cast(),
            adjacency: self.adjacency.cast(),
            classes: self.classes.clone(),
            labels: self.labels.cast(),
            n_classes: self.n_classes,
            splits: self.splits.clone(),
        }
    }
}

/// `D^-1/2 (A + I) D^-1/2` where `D` is the degree matrix of `A + I`.
///
/// `a` must be symmetric with a zero diagonal.
pub fn normalize_adjacency<T: Real>(a: &SparseMatrix<T>) -> Result<SparseMatrix<T>> {
    if a.rows() != a.cols() {
        return Err(Error::validation("adjacency must be square"));
    }
    if !a.is_symmetric(0.0) {
        return Err(Error::validation("adjacency is not symmetric"));
    }
    if !a.has_zero_diagonal() {
        return Err(Error::validation(
            "adjacency has self-loops; they are added during normalization",
        ));
    }
    let n = a.rows();
    let inv_sqrt: Vec<f64> = (0..n)
        .map(|i| {
            let d: f64 = a.row(i).1.iter().map(|v| v.as_f64()).sum::<f64>() + 1.0;
            1.0 / libm::sqrt(d)
        })
        .collect();
    let mut offsets = Vec::with_capacity(n + 1);
    offsets.push(0);
    let mut indices = Vec::with_capacity(a.nnz() + n);
    let mut values = Vec::with_capacity(a.nnz() + n);
    for i in 0..n {
        let (cols, vals) = a.row(i);
        let mut diag_done = false;
        for (&j, &v) in cols.iter().zip(vals) {
            if !diag_done && j > i {
                indices.push(i);
                values.push(T::lit(inv_sqrt[i] * inv_sqrt[i]));
                diag_done = true;
            }
            indices.push(j);
            values.push(T::lit(v.as_f64() * inv_sqrt[i] * inv_sqrt[j]));
        }
        if !diag_done {
            indices.push(i);
            values.push(T::lit(inv_sqrt[i] * inv_sqrt[i]));
        }
        offsets.push(indices.len());
    }
    SparseMatrix::new(n, n, offsets, indices, values)
}

/// Parameters of the stochastic-block-model generator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SbmSpec {
    pub n_nodes: usize,
    pub n_classes: usize,
    pub feat_dim: usize,
    pub p_in: f64,
    pub p_out: f64,
    pub feat_noise: f64,
    pub seed: u64,
}

/// Stochastic block model with class-conditional Gaussian features.
///
/// Node `i` belongs to class `i / (N / C)`. Same-class pairs are linked with
/// probability `p_in`, cross-class pairs with `p_out`. The mean feature vector
/// of class `c` is the indicator of the dimensions `j` with `j % C == c`, so
/// class means are mutually orthogonal; each feature adds `feat_noise * N(0, 1)`.
/// Splits follow [`SplitSpec::scaled`].
pub fn synth_sbm<T: Real>(spec: &SbmSpec) -> Result<Graph<T>> {
    let SbmSpec {
        n_nodes,
        n_classes,
        feat_dim,
        p_in,
        p_out,
        feat_noise,
        seed,
    } = *spec;
    if !(0.0..=1.0).contains(&p_in) || !(0.0..=1.0).contains(&p_out) {
        return Err(Error::validation("edge probabilities must lie in [0, 1]"));
    }
    if p_in <= p_out {
        return Err(Error::validation(alloc::format!(
            "p_in ({p_in}) must exceed p_out ({p_out}): the generator only produces homophilous graphs"
        )));
    }
    if n_classes == 0 || n_nodes == 0 || n_nodes % n_classes != 0 {
        return Err(Error::validation(alloc::format!(
            "node count {n_nodes} must be a positive multiple of the class count {n_classes}"
        )));
    }
    if feat_dim < n_classes {
        return Err(Error::validation("feature dimension must be at least the class count"));
    }
    if !(feat_noise >= 0.0 && feat_noise.is_finite()) {
        return Err(Error::validation("feature noise must be finite and non-negative"));
    }
    let block = n_nodes / n_classes;
    let classes: Vec<usize> = (0..n_nodes).map(|i| i / block).collect();

    let mut r = rng::stream(seed, &[rng::TAG_GRAPH]);
    let mut edges = Vec::new();
    for a in 0..n_classes {
        for b in a..n_classes {
            let p = if a == b { p_in } else { p_out };
            let (oa, ob) = (a * block, b * block);
            if a == b {
                sample_lower_triangle(block, p, &mut r, |i, j| edges.push((oa + i, oa + j)));
            } else {
                sample_rectangle(block, block, p, &mut r, |i, j| edges.push((oa + i, ob + j)));
            }
        }
    }

    let mut r = rng::stream(seed, &[rng::TAG_FEATURES]);
    let features = Matrix::from_fn(n_nodes, feat_dim, |i, j| {
        let mean = if j % n_classes == classes[i] { 1.0 } else { 0.0 };
        let z: f64 = r.sample(StandardNormal);
        T::lit(mean + feat_noise * z)
    });
    let splits = make_splits(
        &classes,
        n_classes,
        SplitSpec::scaled(n_nodes, n_classes),
        rng::derive(seed, &[rng::TAG_SPLITS]),
    )?;
    Graph::new(features, &edges, classes, n_classes, splits)
}

/// Number of failures before the next success of a Bernoulli(p) sequence.
fn geometric_skip<R: Rng>(p: f64, r: &mut R) -> u64 {
    let u: f64 = r.random::<f64>();
    let s = libm::floor(libm::log1p(-u) / libm::log1p(-p));
    if s.is_finite() && s < u64::MAX as f64 {
        s as u64
    } else {
        u64::MAX
    }
}

/// Visit each pair `(i, j)` with `j < i < m` independently with probability `p`.
fn sample_lower_triangle<R: Rng>(m: usize, p: f64, r: &mut R, mut emit: impl FnMut(usize, usize)) {
    let total = (m as u64) * (m as u64).saturating_sub(1) / 2;
    for_each_selected(total, p, r, |t| {
        // Row i holds pairs t in [i(i-1)/2, i(i+1)/2).
        let mut i = ((1.0 + libm::sqrt(1.0 + 8.0 * t as f64)) / 2.0) as u64;
        while i * (i - 1) / 2 > t {
            i -= 1;
        }
        while (i + 1) * i / 2 <= t {
            i += 1;
        }
        let j = t - i * (i - 1) / 2;
        emit(i as usize, j as usize);
    });
}

fn sample_rectangle<R: Rng>(rows: usize, cols: usize, p: f64, r: &mut R, mut emit: impl FnMut(usize, usize)) {
    let total = rows as u64 * cols as u64;
    for_each_selected(total, p, r, |t| {
        emit((t / cols as u64) as usize, (t % cols as u64) as usize)
    });
}

fn for_each_selected<R: Rng>(total: u64, p: f64, r: &mut R, mut emit: impl FnMut(u64)) {
    if p <= 0.0 || total == 0 {
        return;
    }
    if p >= 1.0 {
        (0..total).for_each(emit);
        return;
    }
    let mut t = geometric_skip(p, r);
    while t < total {
        emit(t);
        t = t.saturating_add(1).saturating_add(geometric_skip(p, r));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::matmul;

    fn path3() -> SparseMatrix<f64> {
        SparseMatrix::from_triplets(3, 3, &[(0, 1, 1.0), (1, 0, 1.0), (1, 2, 1.0), (2, 1, 1.0)]).unwrap()
    }

    #[test]
    fn isolated_node_normalizes_to_one() {
        let a = SparseMatrix::<f64>::zeros(1, 1);
        assert_eq!(normalize_adjacency(&a).unwrap().to_dense().as_slice(), &[1.0]);
    }

    #[test]
    fn single_edge_normalizes_to_halves() {
        let a = SparseMatrix::from_triplets(2, 2, &[(0, 1, 1.0), (1, 0, 1.0)]).unwrap();
        let n = normalize_adjacency(&a).unwrap().to_dense();
        for &v in n.as_slice() {
            let v: f64 = v;
            assert!((v - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn path_graph_center_is_one_third() {
        let n = normalize_adjacency(&path3()).unwrap();
        assert!(n.is_symmetric(1e-12));
        assert!((n.get(1, 1) - 1.0 / 3.0).abs() < 1e-15);
        assert!((n.get(0, 1) - 1.0 / 6f64.sqrt()).abs() < 1e-15);
        assert_eq!(n.get(0, 2), 0.0);
    }

    #[test]
    fn normalization_rejects_asymmetric_and_self_loops() {
        let asym = SparseMatrix::<f64>::from_triplets(2, 2, &[(0, 1, 1.0)]).unwrap();
        assert!(matches!(normalize_adjacency(&asym), Err(Error::Validation(_))));
        let looped = SparseMatrix::<f64>::from_triplets(2, 2, &[(0, 0, 1.0)]).unwrap();
        assert!(matches!(normalize_adjacency(&looped), Err(Error::Validation(_))));
    }

    #[test]
    fn normalization_matches_dense_formula_on_sbm() {
        let g: Graph<f64> = synth_sbm(&SbmSpec {
            n_nodes: 40,
            n_classes: 4,
            feat_dim: 4,
            p_in: 0.3,
            p_out: 0.05,
            feat_noise: 1.0,
            seed: 11,
        })
        .unwrap();
        let n = g.n_nodes();
        let mut a_tilde = g.adjacency().to_dense();
        for i in 0..n {
            a_tilde.set(i, i, 1.0);
        }
        let d_inv_sqrt = Matrix::from_fn(n, n, |i, j| {
            if i == j {
                1.0 / a_tilde.row(i).iter().sum::<f64>().sqrt()
            } else {
                0.0
            }
        });
        let oracle = matmul(&matmul(&d_inv_sqrt, &a_tilde).unwrap(), &d_inv_sqrt).unwrap();
        let fast = normalize_adjacency(g.adjacency()).unwrap().to_dense();
        assert!(fast.max_abs_diff(&oracle) < 1e-12);
    }

    #[test]
    fn graph_symmetrizes_dedups_and_strips_self_loops() {
        let x = Matrix::<f64>::zeros(3, 1);
        let splits = Splits::new(3, vec![0], vec![1], vec![2]).unwrap();
        let g = Graph::new(x, &[(0, 1), (0, 1), (1, 0), (2, 2), (1, 2)], vec![0, 1, 0], 2, splits).unwrap();
        assert_eq!(g.undirected_edges(), vec![(0, 1), (1, 2)]);
        assert!(g.adjacency().is_symmetric(0.0));
        assert!(g.adjacency().has_zero_diagonal());
    }

    #[test]
    fn graph_rejects_bad_labels() {
        let splits = Splits::new(2, vec![0], vec![], vec![1]).unwrap();
        let err = Graph::new(Matrix::<f64>::zeros(2, 1), &[], vec![0, 2], 2, splits).unwrap_err();
        assert!(matches!(err, Error::Validation(_)));
    }

    #[test]
    fn splits_reject_overlap() {
        assert!(Splits::new(4, vec![0, 1], vec![1], vec![2]).is_err());
        assert!(Splits::new(4, vec![0], vec![5], vec![2]).is_err());
        let s = Splits::new(4, vec![1, 0], vec![2], vec![3]).unwrap();
        assert_eq!(s.labeled, vec![0, 1]);
        assert_eq!(s.unlabeled, vec![2, 3]);
    }

    #[test]
    fn make_splits_one_per_class_and_deterministic() {
        let classes = vec![0, 1, 0, 1, 0, 1];
        let spec = SplitSpec {
            per_class: 1,
            validation: 2,
            test: 2,
        };
        let a = make_splits(&classes, 2, spec, 9).unwrap();
        assert_eq!(a.labeled.len(), 2);
        assert_eq!(a, make_splits(&classes, 2, spec, 9).unwrap());
        let err = make_splits(
            &classes,
            2,
            SplitSpec {
                per_class: 4,
                validation: 0,
                test: 0,
            },
            9,
        )
        .unwrap_err();
        assert!(alloc::format!("{err}").contains("class 0"));
    }

    #[test]
    fn sbm_cliques_when_p_in_one_p_out_zero() {
        let g: Graph<f64> = synth_sbm(&SbmSpec {
            n_nodes: 12,
            n_classes: 3,
            feat_dim: 3,
            p_in: 1.0,
            p_out: 0.0,
            feat_noise: 0.0,
            seed: 1,
        })
        .unwrap();
        let edges = g.undirected_edges();
        assert_eq!(edges.len(), 3 * 6);
        assert!(edges.iter().all(|&(i, j)| g.classes()[i] == g.classes()[j]));
        for i in 0..12 {
            for j in 0..12 {
                if g.classes()[i] == g.classes()[j] {
                    assert_eq!(g.features().row(i), g.features().row(j));
                }
            }
        }
    }

    #[test]
    fn sbm_rejects_heterophily_and_is_reproducible() {
        let mut spec = SbmSpec {
            n_nodes: 60,
            n_classes: 3,
            feat_dim: 6,
            p_in: 0.01,
            p_out: 0.02,
            feat_noise: 1.0,
            seed: 5,
        };
        assert!(matches!(synth_sbm::<f64>(&spec), Err(Error::Validation(_))));
        spec.p_in = 0.3;
        let a: Graph<f64> = synth_sbm(&spec).unwrap();
        let b: Graph<f64> = synth_sbm(&spec).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn sbm_edge_density_near_expectation() {
        let spec = SbmSpec {
            n_nodes: 300,
            n_classes: 3,
            feat_dim: 3,
            p_in: 0.2,
            p_out: 0.02,
            feat_noise: 1.0,
            seed: 3,
        };
        let g: Graph<f64> = synth_sbm(&spec).unwrap();
        let (mut inside, mut across) = (0usize, 0usize);
        for (i, j) in g.undirected_edges() {
            if g.classes()[i] == g.classes()[j] {
                inside += 1
            } else {
                across += 1
            }
        }
        let exp_in = 3.0 * (100.0 * 99.0 / 2.0) * 0.2;
        let exp_out = 3.0 * 100.0 * 100.0 * 0.02;
        assert!((inside as f64 - exp_in).abs() < 0.1 * exp_in, "{inside} vs {exp_in}");
        assert!((across as f64 - exp_out).abs() < 0.2 * exp_out, "{across} vs {exp_out}");
    }
}
