//! Compressed sparse row storage for square operators.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsrMatrix {
    n: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    pub fn zeros(n: usize) -> Self {
        CsrMatrix {
            n,
            indptr: vec![0; n + 1],
            indices: Vec::new(),
            values: Vec::new(),
        }
    }

    /// Builds an `n x n` matrix from `(row, col, value)` triplets.
    /// Duplicates are summed; explicit zeros are kept so the pattern stays stable.
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut sorted: Vec<(usize, usize, f64)> = triplets.to_vec();
        sorted.sort_by_key(|t| (t.0, t.1));

        let mut indptr = vec![0usize; n + 1];
        let mut indices = Vec::with_capacity(sorted.len());
        let mut values: Vec<f64> = Vec::with_capacity(sorted.len());
        let mut last: Option<(usize, usize)> = None;
        for &(r, c, v) in &sorted {
            assert!(r < n && c < n, "triplet ({r}, {c}) out of bounds for n = {n}");
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                indices.push(c);
                values.push(v);
                indptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for i in 0..n {
            indptr[i + 1] += indptr[i];
        }
        CsrMatrix {
            n,
            indptr,
            indices,
            values,
        }
    }

    pub fn from_dense(m: &DMatrix<f64>) -> Self {
        assert_eq!(m.nrows(), m.ncols(), "operator must be square");
        let mut trip = Vec::new();
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                if m[(i, j)] != 0.0 {
                    trip.push((i, j, m[(i, j)]));
                }
            }
        }
        Self::from_triplets(m.nrows(), &trip)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.indptr[i]..self.indptr[i + 1];
        self.indices[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n).flat_map(move |i| self.row(i).map(move |(j, v)| (i, j, v)))
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.row(i)
            .find(|&(c, _)| c == j)
            .map(|(_, v)| v)
            .unwrap_or(0.0)
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n, self.n);
        for (i, j, v) in self.triplets() {
            m[(i, j)] += v;
        }
        m
    }

    /// Returns `alpha * A + beta * I`, keeping the diagonal explicitly stored.
    pub fn scaled_shifted(&self, alpha: f64, beta: f64) -> Self {
        let mut trip: Vec<(usize, usize, f64)> =
            self.triplets().map(|(i, j, v)| (i, j, alpha * v)).collect();
        trip.extend((0..self.n).map(|i| (i, i, beta)));
        Self::from_triplets(self.n, &trip)
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        self.triplets()
            .all(|(i, j, v)| (self.get(j, i) - v).abs() <= tol)
    }

    /// `out = A * x`, column by column.
    pub fn mul_dense_into(&self, x: &DMatrix<f64>, out: &mut DMatrix<f64>) {
        assert_eq!(x.nrows(), self.n);
        assert_eq!(out.shape(), x.shape());
        let n = self.n;
        let xs = x.as_slice();
        let os = out.as_mut_slice();
        for c in 0..x.ncols() {
            let xc = &xs[c * n..(c + 1) * n];
            let oc = &mut os[c * n..(c + 1) * n];
            for (i, o) in oc.iter_mut().enumerate() {
                let mut acc = 0.0;
                for p in self.indptr[i]..self.indptr[i + 1] {
                    acc += self.values[p] * xc[self.indices[p]];
                }
                *o = acc;
            }
        }
    }

    pub fn mul_dense(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(x.nrows(), x.ncols());
        self.mul_dense_into(x, &mut out);
        out
    }

    /// `out = 2 * A * x - prev`, the Chebyshev three-term step, fused into one pass.
    pub fn chebyshev_step_into(&self, x: &DMatrix<f64>, prev: &DMatrix<f64>, out: &mut DMatrix<f64>) {
        assert_eq!(x.nrows(), self.n);
        assert_eq!(prev.shape(), x.shape());
        assert_eq!(out.shape(), x.shape());
        let n = self.n;
        let xs = x.as_slice();
        let ps = prev.as_slice();
        let os = out.as_mut_slice();
        for c in 0..x.ncols() {
            let xc = &xs[c * n..(c + 1) * n];
            let pc = &ps[c * n..(c + 1) * n];
            let oc = &mut os[c * n..(c + 1) * n];
            for i in 0..n {
                let mut acc = 0.0;
                for p in self.indptr[i]..self.indptr[i + 1] {
                    acc += self.values[p] * xc[self.indices[p]];
                }
                oc[i] = 2.0 * acc - pc[i];
            }
        }
    }

    pub fn mul_vec(&self, x: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate().take(self.n) {
            let mut acc = 0.0;
            for p in self.indptr[i]..self.indptr[i + 1] {
                acc += self.values[p] * x[self.indices[p]];
            }
            *o = acc;
        }
    }
}
