use alloc::vec;
use alloc::vec::Vec;

use super::dense::Matrix;
use super::for_each_row;
use crate::error::{Error, Result};
use crate::real::Real;

/// Compressed sparse row matrix.
///
/// Column indices are strictly increasing within each row.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix<T> {
    rows: usize,
    cols: usize,
    offsets: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<T>,
}

impl<T: Real> SparseMatrix<T> {
    pub fn new(rows: usize, cols: usize, offsets: Vec<usize>, indices: Vec<usize>, values: Vec<T>) -> Result<Self> {
        if offsets.len() != rows + 1 || offsets[0] != 0 {
            return Err(Error::validation(
                "CSR offsets must have rows + 1 entries starting at 0",
            ));
        }
        if indices.len() != values.len() || offsets[rows] != indices.len() {
            return Err(Error::validation("CSR offsets, indices and values disagree in length"));
        }
        for r in 0..rows {
            if offsets[r] > offsets[r + 1] {
                return Err(Error::validation(alloc::format!("CSR offsets decrease at row {r}")));
            }
            let cols_r = &indices[offsets[r]..offsets[r + 1]];
            if cols_r.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::validation(alloc::format!(
                    "CSR column indices not strictly increasing in row {r}"
                )));
            }
            if cols_r.last().is_some_and(|&c| c >= cols) {
                return Err(Error::validation(alloc::format!(
                    "CSR column index out of range in row {r}"
                )));
            }
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("sparse matrix value".into()));
        }
        Ok(SparseMatrix {
            rows,
            cols,
            offsets,
            indices,
            values,
        })
    }

    /// Build from `(row, col, value)` triplets; duplicate coordinates are summed.
    pub fn from_triplets(rows: usize, cols: usize, triplets: &[(usize, usize, T)]) -> Result<Self> {
        let mut sorted: Vec<(usize, usize, T)> = triplets.to_vec();
        for &(r, c, _) in &sorted {
            if r >= rows || c >= cols {
                return Err(Error::validation(alloc::format!(
                    "triplet ({r}, {c}) outside {rows}x{cols}"
                )));
            }
        }
        sorted.sort_by_key(|t| (t.0, t.1));
        let mut offsets = vec![0usize; rows + 1];
        let mut indices = Vec::with_capacity(sorted.len());
        let mut values: Vec<T> = Vec::with_capacity(sorted.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in sorted {
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
                continue;
            }
            offsets[r + 1] += 1;
            indices.push(c);
            values.push(v);
            last = Some((r, c));
        }
        for r in 0..rows {
            offsets[r + 1] += offsets[r];
        }
        Self::new(rows, cols, offsets, indices, values)
    }

    pub fn identity(n: usize) -> Self {
        SparseMatrix {
            rows: n,
            cols: n,
            offsets: (0..=n).collect(),
            indices: (0..n).collect(),
            values: vec![T::one(); n],
        }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        SparseMatrix {
            rows,
            cols,
            offsets: vec![0; rows + 1],
            indices: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn from_dense(m: &Matrix<T>) -> Self {
        let mut offsets = Vec::with_capacity(m.rows() + 1);
        offsets.push(0);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        for row in m.row_iter() {
            for (j, &v) in row.iter().enumerate() {
                if v != T::zero() {
                    indices.push(j);
                    values.push(v);
                }
            }
            offsets.push(indices.len());
        }
        SparseMatrix {
            rows: m.rows(),
            cols: m.cols(),
            offsets,
            indices,
            values,
        }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    /// Column indices and values of row `r`.
    #[inline]
    pub fn row(&self, r: usize) -> (&[usize], &[T]) {
        let span = self.offsets[r]..self.offsets[r + 1];
        (&self.indices[span.clone()], &self.values[span])
    }

    pub fn get(&self, r: usize, c: usize) -> T {
        let (cols, vals) = self.row(r);
        cols.binary_search(&c).map_or(T::zero(), |k| vals[k])
    }

    pub fn to_dense(&self) -> Matrix<T> {
        let mut m = Matrix::zeros(self.rows, self.cols);
        for r in 0..self.rows {
            let (cols, vals) = self.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                m.set(r, c, v);
            }
        }
        m
    }

    pub fn transpose(&self) -> Self {
        let mut counts = vec![0usize; self.cols + 1];
        for &c in &self.indices {
            counts[c + 1] += 1;
        }
        for c in 0..self.cols {
            counts[c + 1] += counts[c];
        }
        let offsets = counts.clone();
        let mut cursor = counts;
        let mut indices = vec![0usize; self.nnz()];
        let mut values = vec![T::zero(); self.nnz()];
        for r in 0..self.rows {
            let (cols, vals) = self.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                let slot = cursor[c];
                indices[slot] = r;
                values[slot] = v;
                cursor[c] += 1;
            }
        }
        SparseMatrix {
            rows: self.cols,
            cols: self.rows,
            offsets,
            indices,
            values,
        }
    }

    /// True when the sparsity pattern and values are symmetric within `tol`.
    pub fn is_symmetric(&self, tol: f64) -> bool {
        if self.rows != self.cols {
            return false;
        }
        let t = self.transpose();
        if t.offsets != self.offsets || t.indices != self.indices {
            return false;
        }
        self.values
            .iter()
            .zip(&t.values)
            .all(|(a, b)| (a.as_f64() - b.as_f64()).abs() <= tol)
    }

    pub fn has_zero_diagonal(&self) -> bool {
        (0..self.rows.min(self.cols)).all(|r| self.get(r, r) == T::zero())
    }

    pub fn cast<U: Real>(&self) -> SparseMatrix<U> {
        SparseMatrix {
            rows: self.rows,
            cols: self.cols,
            offsets: self.offsets.clone(),
            indices: self.indices.clone(),
            values: self.values.iter().map(|v| U::lit(v.as_f64())).collect(),
        }
    }
}

/// `s * d` for CSR `s` and dense `d`.
pub fn spmm<T: Real>(s: &SparseMatrix<T>, d: &Matrix<T>) -> Result<Matrix<T>> {
    if s.cols != d.rows() {
        return Err(Error::dim("spmm", s.shape(), d.shape()));
    }
    let n = d.cols();
    let mut out = Matrix::zeros(s.rows, n);
    for_each_row(out.as_mut_slice(), n, |r, orow| {
        let (cols, vals) = s.row(r);
        for (&c, &v) in cols.iter().zip(vals) {
            for (o, &x) in orow.iter_mut().zip(d.row(c)) {
                *o += v * x;
            }
        }
    });
    Ok(out)
}

/// `s^T * d`.
pub fn spmm_t<T: Real>(s: &SparseMatrix<T>, d: &Matrix<T>) -> Result<Matrix<T>> {
    if s.rows != d.rows() {
        return Err(Error::dim("spmm_t", s.shape(), d.shape()));
    }
    spmm(&s.transpose(), d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::matmul;
    use crate::rng;
    use rand::Rng;

    #[test]
    fn sparse_identity_is_identity() {
        let m = Matrix::<f64>::from_fn(4, 3, |i, j| i as f64 * 1.5 - j as f64);
        assert_eq!(spmm(&SparseMatrix::identity(4), &m).unwrap(), m);
    }

    #[test]
    fn empty_sparse_gives_zero() {
        let m = Matrix::<f64>::from_fn(5, 2, |i, j| (i + j) as f64);
        assert_eq!(spmm(&SparseMatrix::zeros(3, 5), &m).unwrap(), Matrix::zeros(3, 2));
    }

    #[test]
    fn random_sparse_matches_dense_oracle() {
        for seed in 0..20 {
            let mut r = rng::stream(seed, &[]);
            let dense_s = Matrix::<f64>::from_fn(6, 6, |_, _| {
                if r.random::<f64>() < 0.3 {
                    r.random::<f64>() * 2.0 - 1.0
                } else {
                    0.0
                }
            });
            let s = SparseMatrix::from_dense(&dense_s);
            let d = Matrix::<f64>::from_fn(6, 4, |_, _| r.random::<f64>() * 4.0 - 2.0);
            let fast = spmm(&s, &d).unwrap();
            let oracle = matmul(&s.to_dense(), &d).unwrap();
            for (a, b) in fast.as_slice().iter().zip(oracle.as_slice()) {
                assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
            }
            let fast_t = spmm_t(&s, &d).unwrap();
            let oracle_t = matmul(&dense_s.transpose(), &d).unwrap();
            assert!(fast_t.max_abs_diff(&oracle_t) <= 1e-12);
        }
    }

    #[test]
    fn triplets_sum_duplicates_and_sort() {
        let s = SparseMatrix::<f64>::from_triplets(2, 3, &[(1, 2, 1.0), (0, 1, 2.0), (1, 2, 0.5)]).unwrap();
        assert_eq!(s.nnz(), 2);
        assert_eq!(s.get(1, 2), 1.5);
        assert_eq!(s.get(0, 1), 2.0);
        assert_eq!(s.get(0, 0), 0.0);
    }

    #[test]
    fn rejects_unsorted_columns() {
        let err = SparseMatrix::<f64>::new(1, 3, alloc::vec![0, 2], alloc::vec![2, 1], alloc::vec![1.0, 1.0]);
        assert!(matches!(err, Err(Error::Validation(_))));
    }

    #[test]
    fn spmm_shape_mismatch() {
        let s = SparseMatrix::<f32>::identity(3);
        assert!(matches!(spmm(&s, &Matrix::zeros(2, 2)), Err(Error::Dimension { .. })));
    }
}
