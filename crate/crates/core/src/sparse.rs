//! Compressed sparse row storage for the small, very sparse operators that
//! show up on the truncated Fock space, plus the dense/sparse products the
//! master-equation kernels need.
//!
//! Dense matrices handed to these kernels are flat column-major slices.

use faer::sparse::{SparseColMat, Triplet};
use faer::Mat;

use crate::C64;

#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<C64>,
}

impl CsrMatrix {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self {
            nrows,
            ncols,
            indptr: vec![0; nrows + 1],
            indices: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_diagonal(&vec![C64::new(1.0, 0.0); n])
    }

    pub fn from_diagonal(diag: &[C64]) -> Self {
        let n = diag.len();
        Self::from_triplets(n, n, diag.iter().enumerate().map(|(i, &v)| (i, i, v)))
    }

    /// Duplicates are summed; exact zeros are dropped.
    pub fn from_triplets(
        nrows: usize,
        ncols: usize,
        triplets: impl IntoIterator<Item = (usize, usize, C64)>,
    ) -> Self {
        let mut rows: Vec<Vec<(usize, C64)>> = vec![Vec::new(); nrows];
        for (i, j, v) in triplets {
            assert!(i < nrows && j < ncols, "triplet ({i}, {j}) out of bounds");
            rows[i].push((j, v));
        }
        let mut indptr = Vec::with_capacity(nrows + 1);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        indptr.push(0);
        for mut row in rows {
            row.sort_by_key(|&(j, _)| j);
            let mut k = 0;
            while k < row.len() {
                let j = row[k].0;
                let mut acc = C64::new(0.0, 0.0);
                while k < row.len() && row[k].0 == j {
                    acc += row[k].1;
                    k += 1;
                }
                if acc != C64::new(0.0, 0.0) {
                    indices.push(j);
                    values.push(acc);
                }
            }
            indptr.push(indices.len());
        }
        Self {
            nrows,
            ncols,
            indptr,
            indices,
            values,
        }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, C64)> + '_ {
        let (s, e) = (self.indptr[i], self.indptr[i + 1]);
        self.indices[s..e]
            .iter()
            .copied()
            .zip(self.values[s..e].iter().copied())
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, C64)> + '_ {
        (0..self.nrows).flat_map(move |i| self.row(i).map(move |(j, v)| (i, j, v)))
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        let (s, e) = (self.indptr[i], self.indptr[i + 1]);
        match self.indices[s..e].binary_search(&j) {
            Ok(k) => self.values[s + k],
            Err(_) => C64::new(0.0, 0.0),
        }
    }

    pub fn adjoint(&self) -> Self {
        Self::from_triplets(
            self.ncols,
            self.nrows,
            self.triplets().map(|(i, j, v)| (j, i, v.conj())),
        )
    }

    pub fn conj(&self) -> Self {
        Self {
            values: self.values.iter().map(|v| v.conj()).collect(),
            ..self.clone()
        }
    }

    pub fn transpose(&self) -> Self {
        Self::from_triplets(self.ncols, self.nrows, self.triplets().map(|(i, j, v)| (j, i, v)))
    }

    pub fn scale(&self, s: C64) -> Self {
        Self::from_triplets(self.nrows, self.ncols, self.triplets().map(|(i, j, v)| (i, j, v * s)))
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!((self.nrows, self.ncols), (other.nrows, other.ncols));
        Self::from_triplets(self.nrows, self.ncols, self.triplets().chain(other.triplets()))
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.scale(C64::new(-1.0, 0.0)))
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.ncols, other.nrows);
        let mut trip = Vec::new();
        for i in 0..self.nrows {
            for (k, a) in self.row(i) {
                for (j, b) in other.row(k) {
                    trip.push((i, j, a * b));
                }
            }
        }
        Self::from_triplets(self.nrows, other.ncols, trip)
    }

    /// Kronecker product `self ⊗ other`.
    pub fn kron(&self, other: &Self) -> Self {
        let mut trip = Vec::with_capacity(self.nnz() * other.nnz());
        for (i, j, a) in self.triplets() {
            for (k, l, b) in other.triplets() {
                trip.push((i * other.nrows + k, j * other.ncols + l, a * b));
            }
        }
        Self::from_triplets(self.nrows * other.nrows, self.ncols * other.ncols, trip)
    }

    /// `y = A x`.
    pub fn mul_vec(&self, x: &[C64], y: &mut [C64]) {
        debug_assert_eq!(x.len(), self.ncols);
        debug_assert_eq!(y.len(), self.nrows);
        for (i, yi) in y.iter_mut().enumerate() {
            let mut acc = C64::new(0.0, 0.0);
            for k in self.indptr[i]..self.indptr[i + 1] {
                acc += self.values[k] * x[self.indices[k]];
            }
            *yi = acc;
        }
    }

    pub fn apply(&self, x: &[C64]) -> Vec<C64> {
        let mut y = vec![C64::new(0.0, 0.0); self.nrows];
        self.mul_vec(x, &mut y);
        y
    }

    /// `out += alpha * A X` for a column-major `X` with `ncols` columns.
    pub fn left_mul_dense_acc(&self, x: &[C64], ncols: usize, alpha: C64, out: &mut [C64]) {
        let n_in = self.ncols;
        let n_out = self.nrows;
        for c in 0..ncols {
            let xc = &x[c * n_in..(c + 1) * n_in];
            let oc = &mut out[c * n_out..(c + 1) * n_out];
            for (i, o) in oc.iter_mut().enumerate() {
                let mut acc = C64::new(0.0, 0.0);
                for k in self.indptr[i]..self.indptr[i + 1] {
                    acc += self.values[k] * xc[self.indices[k]];
                }
                *o += alpha * acc;
            }
        }
    }

    /// `out += alpha * X A` for a column-major `X` with `nrows_x` rows.
    pub fn right_mul_dense_acc(&self, x: &[C64], nrows_x: usize, alpha: C64, out: &mut [C64]) {
        for k in 0..self.nrows {
            let xk = &x[k * nrows_x..(k + 1) * nrows_x];
            for (j, a) in self.row(k) {
                let s = alpha * a;
                let oj = &mut out[j * nrows_x..(j + 1) * nrows_x];
                for (o, &xv) in oj.iter_mut().zip(xk) {
                    *o += s * xv;
                }
            }
        }
    }

    pub fn to_dense(&self) -> Mat<C64> {
        let mut m = Mat::<C64>::zeros(self.nrows, self.ncols);
        for (i, j, v) in self.triplets() {
            m[(i, j)] = v;
        }
        m
    }

    pub fn from_dense(m: &Mat<C64>, drop_below: f64) -> Self {
        let mut trip = Vec::new();
        for j in 0..m.ncols() {
            for i in 0..m.nrows() {
                let v = m[(i, j)];
                if v.norm() > drop_below {
                    trip.push((i, j, v));
                }
            }
        }
        Self::from_triplets(m.nrows(), m.ncols(), trip)
    }

    pub fn to_faer_csc(&self) -> SparseColMat<usize, C64> {
        let trip: Vec<_> = self.triplets().map(|(i, j, v)| Triplet::new(i, j, v)).collect();
        SparseColMat::try_new_from_triplets(self.nrows, self.ncols, &trip)
            .expect("triplets are in bounds and deduplicated")
    }

    /// Largest entry magnitude of `self - other`.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.sub(other)
            .values
            .iter()
            .fold(0.0, |m, v| m.max(v.norm()))
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.norm()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    #[test]
    fn triplets_are_summed_and_zeros_dropped() {
        let m = CsrMatrix::from_triplets(2, 2, [(0, 1, c(1.0)), (0, 1, c(2.0)), (1, 0, c(0.0))]);
        assert_eq!(m.nnz(), 1);
        assert_eq!(m.get(0, 1), c(3.0));
    }

    #[test]
    fn dense_products_match_sparse_product() {
        let a = CsrMatrix::from_triplets(
            3,
            3,
            [(0, 1, c(1.0)), (1, 2, C64::new(0.0, 2.0)), (2, 0, c(-1.5)), (1, 1, c(0.5))],
        );
        let b = CsrMatrix::from_triplets(3, 3, [(0, 0, c(2.0)), (2, 1, C64::new(1.0, 1.0)), (1, 2, c(3.0))]);
        let x = b.to_dense_colmajor();
        let mut left = vec![C64::new(0.0, 0.0); 9];
        a.left_mul_dense_acc(&x, 3, c(1.0), &mut left);
        let mut right = vec![C64::new(0.0, 0.0); 9];
        b.right_mul_dense_acc(&a.to_dense_colmajor(), 3, c(1.0), &mut right);
        let ab = a.matmul(&b);
        for j in 0..3 {
            for i in 0..3 {
                assert!((left[j * 3 + i] - ab.get(i, j)).norm() < 1e-15);
                assert!((right[j * 3 + i] - ab.get(i, j)).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn kron_indexing() {
        let a = CsrMatrix::from_triplets(2, 2, [(0, 1, c(2.0))]);
        let b = CsrMatrix::from_triplets(2, 2, [(1, 0, c(3.0))]);
        let k = a.kron(&b);
        assert_eq!(k.get(1, 2), c(6.0));
        assert_eq!(k.nnz(), 1);
    }

    impl CsrMatrix {
        fn to_dense_colmajor(&self) -> Vec<C64> {
            let d = self.to_dense();
            (0..self.ncols)
                .flat_map(|j| (0..self.nrows).map(move |i| (i, j)))
                .map(|(i, j)| d[(i, j)])
                .collect()
        }
    }
}
