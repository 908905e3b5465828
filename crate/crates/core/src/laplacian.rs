//! Graph Laplacians, largest-eigenvalue estimation and rescaling into the
//! Chebyshev domain `[-1, 1]`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::SparseGraph;
use crate::sparse::CsrMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LaplacianKind {
    /// `D - W`
    Combinatorial,
    /// `I - D^{-1/2} W D^{-1/2}`, zero rows for isolated nodes
    #[default]
    Normalized,
}

impl std::str::FromStr for LaplacianKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "combinatorial" => Ok(LaplacianKind::Combinatorial),
            "normalized" => Ok(LaplacianKind::Normalized),
            other => Err(Error::Validation(format!("unknown laplacian kind '{other}'"))),
        }
    }
}

/// Sparse symmetric Laplacian, possibly rescaled to `2L/lambda_max - I`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LaplacianOp {
    kind: LaplacianKind,
    matrix: CsrMatrix,
    lambda_max: Option<f64>,
    rescaled: bool,
}

impl LaplacianOp {
    pub fn n(&self) -> usize {
        self.matrix.n()
    }

    pub fn kind(&self) -> LaplacianKind {
        self.kind
    }

    pub fn matrix(&self) -> &CsrMatrix {
        &self.matrix
    }

    pub fn lambda_max(&self) -> Option<f64> {
        self.lambda_max
    }

    pub fn is_rescaled(&self) -> bool {
        self.rescaled
    }

    pub fn nnz(&self) -> usize {
        self.matrix.nnz()
    }

    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        self.matrix.to_dense()
    }

    /// Wraps an arbitrary symmetric operator already mapped into `[-1, 1]`.
    /// Used by tests and benchmarks that synthesize operators directly.
    pub fn from_rescaled_matrix(kind: LaplacianKind, matrix: CsrMatrix) -> Self {
        LaplacianOp {
            kind,
            matrix,
            lambda_max: None,
            rescaled: true,
        }
    }
}

pub fn laplacian(g: &SparseGraph, kind: LaplacianKind) -> Result<LaplacianOp> {
    let n = g.n();
    let deg = g.degrees();
    let mut has_edge = vec![false; n];
    for e in g.edges() {
        has_edge[e.src] = true;
        has_edge[e.dst] = true;
    }

    let mut trip = Vec::with_capacity(2 * g.n_edges() + n);
    match kind {
        LaplacianKind::Combinatorial => {
            for e in g.edges() {
                trip.push((e.src, e.dst, -e.weight));
                trip.push((e.dst, e.src, -e.weight));
            }
            for i in (0..n).filter(|&i| has_edge[i]) {
                trip.push((i, i, deg[i]));
            }
        }
        LaplacianKind::Normalized => {
            if let Some(i) = (0..n).find(|&i| has_edge[i] && deg[i] <= 0.0) {
                return Err(Error::Domain(format!(
                    "normalized laplacian needs positive degrees, node {i} has degree {}",
                    deg[i]
                )));
            }
            let inv_sqrt: Vec<f64> = deg
                .iter()
                .zip(&has_edge)
                .map(|(&d, &h)| if h { 1.0 / d.sqrt() } else { 0.0 })
                .collect();
            for e in g.edges() {
                let v = -e.weight * inv_sqrt[e.src] * inv_sqrt[e.dst];
                trip.push((e.src, e.dst, v));
                trip.push((e.dst, e.src, v));
            }
            for i in (0..n).filter(|&i| has_edge[i]) {
                trip.push((i, i, 1.0));
            }
        }
    }
    Ok(LaplacianOp {
        kind,
        matrix: CsrMatrix::from_triplets(n, &trip),
        lambda_max: None,
        rescaled: false,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LambdaEstimate {
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
}

pub const DEFAULT_POWER_TOL: f64 = 1e-6;
pub const DEFAULT_POWER_MAX_ITER: usize = 1000;

/// Largest eigenvalue by power iteration on `L + sI`, where the shift `s`
/// comes from the Gershgorin disc bound so the iterated operator is positive
/// semidefinite. Stops once the eigen-residual falls below `tol * lambda`.
///
/// Non-convergence is not an error: the best estimate comes back with
/// `converged = false`.
pub fn estimate_lambda_max(lap: &LaplacianOp, tol: f64, max_iter: usize) -> Result<LambdaEstimate> {
    if lap.rescaled {
        return Err(Error::Contract("lambda_max must be estimated on the unrescaled laplacian".into()));
    }
    let m = lap.matrix();
    let n = m.n();
    if n == 0 || m.triplets().all(|(_, _, v)| v == 0.0) {
        return Ok(LambdaEstimate {
            value: 0.0,
            iterations: 0,
            converged: true,
        });
    }

    let mut lower = 0.0f64;
    let mut upper = 0.0f64;
    for i in 0..n {
        let (mut diag, mut radius) = (0.0, 0.0);
        for (j, v) in m.row(i) {
            if j == i {
                diag += v;
            } else {
                radius += v.abs();
            }
        }
        lower = lower.min(diag - radius);
        upper = upper.max(diag + radius);
    }
    let shift = -lower;
    let scale = upper.max(shift).max(1.0);

    let mut v: Vec<f64> = (0..n).map(|i| 1.0 + 0.1 * ((i + 1) as f64).sin()).collect();
    normalize(&mut v);
    let mut w = vec![0.0; n];
    let mut estimate = 0.0;
    for it in 1..=max_iter {
        m.mul_vec(&v, &mut w);
        for (wi, vi) in w.iter_mut().zip(&v) {
            *wi += shift * vi;
        }
        let rq: f64 = w.iter().zip(&v).map(|(a, b)| a * b).sum();
        estimate = rq - shift;
        let residual = w
            .iter()
            .zip(&v)
            .map(|(a, b)| (a - rq * b).powi(2))
            .sum::<f64>()
            .sqrt();
        if residual <= tol * estimate.abs().max(1e-12 * scale) {
            return Ok(LambdaEstimate {
                value: estimate,
                iterations: it,
                converged: true,
            });
        }
        let norm = normalize(&mut w);
        if norm == 0.0 {
            break;
        }
        std::mem::swap(&mut v, &mut w);
    }
    Ok(LambdaEstimate {
        value: estimate,
        iterations: max_iter,
        converged: false,
    })
}

fn normalize(v: &mut [f64]) -> f64 {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
    norm
}

/// Below this the spectrum is treated as collapsed and `lambda_max = 2` is used.
pub const LAMBDA_FLOOR: f64 = 1e-9;

/// `L~ = (2 / lambda_max) L - I`.
pub fn rescale(lap: &LaplacianOp, lambda_max: f64) -> Result<LaplacianOp> {
    if lap.rescaled {
        return Err(Error::Contract("laplacian is already rescaled".into()));
    }
    let lmax = if lambda_max <= LAMBDA_FLOOR { 2.0 } else { lambda_max };
    Ok(LaplacianOp {
        kind: lap.kind,
        matrix: lap.matrix.scaled_shifted(2.0 / lmax, -1.0),
        lambda_max: Some(lmax),
        rescaled: true,
    })
}

/// Factor applied to the power-iteration estimate before rescaling so an
/// underestimate cannot push eigenvalues past 1.
pub const LAMBDA_INFLATION: f64 = 1.01;

/// Laplacian, estimated spectrum bound and rescaling in one step.
pub fn rescaled_laplacian(g: &SparseGraph, kind: LaplacianKind) -> Result<LaplacianOp> {
    let lap = laplacian(g, kind)?;
    let est = estimate_lambda_max(&lap, DEFAULT_POWER_TOL, DEFAULT_POWER_MAX_ITER)?;
    rescale(&lap, est.value * LAMBDA_INFLATION)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Edge;
    use nalgebra::DMatrix;

    fn triangle() -> SparseGraph {
        SparseGraph::new(3, vec![Edge::new(0, 1, 1.0), Edge::new(0, 2, 1.0), Edge::new(1, 2, 1.0)]).unwrap()
    }

    #[test]
    fn single_edge_combinatorial() {
        let g = SparseGraph::new(2, vec![Edge::new(0, 1, 1.0)]).unwrap();
        let l = laplacian(&g, LaplacianKind::Combinatorial).unwrap();
        assert_eq!(l.to_dense(), DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0]));
        let est = estimate_lambda_max(&l, 1e-10, 1000).unwrap();
        assert!(est.converged);
        assert!((est.value - 2.0).abs() < 1e-9);
        let r = rescale(&l, 2.0).unwrap();
        assert_eq!(r.to_dense(), DMatrix::from_row_slice(2, 2, &[0.0, -1.0, -1.0, 0.0]));
    }

    #[test]
    fn empty_graph_gives_zero_laplacian() {
        for kind in [LaplacianKind::Combinatorial, LaplacianKind::Normalized] {
            let l = laplacian(&SparseGraph::empty(4), kind).unwrap();
            assert_eq!(l.to_dense(), DMatrix::zeros(4, 4));
            assert_eq!(estimate_lambda_max(&l, 1e-6, 10).unwrap().value, 0.0);
            let r = rescale(&l, 0.0).unwrap();
            assert_eq!(r.to_dense(), -DMatrix::<f64>::identity(4, 4));
            assert_eq!(r.lambda_max(), Some(2.0));
        }
    }

    #[test]
    fn triangle_normalized() {
        let l = laplacian(&triangle(), LaplacianKind::Normalized).unwrap();
        let d = l.to_dense();
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { 1.0 } else { -0.5 };
                assert!((d[(i, j)] - want).abs() < 1e-15);
            }
        }
        let est = estimate_lambda_max(&l, 1e-8, 1000).unwrap();
        assert!((est.value - 1.5).abs() < 1e-7, "{est:?}");
    }

    #[test]
    fn isolated_nodes_have_zero_rows() {
        let g = SparseGraph::new(3, vec![Edge::new(0, 1, 2.0)]).unwrap();
        for kind in [LaplacianKind::Combinatorial, LaplacianKind::Normalized] {
            let d = laplacian(&g, kind).unwrap().to_dense();
            assert!(d.row(2).iter().all(|&v| v == 0.0));
            assert!(d.column(2).iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn negative_degree_rejected_for_normalized_only() {
        let g = SparseGraph::new(2, vec![Edge::new(0, 1, -1.0)]).unwrap();
        assert!(laplacian(&g, LaplacianKind::Combinatorial).is_ok());
        assert!(matches!(
            laplacian(&g, LaplacianKind::Normalized),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn rescale_twice_is_a_contract_violation() {
        let l = laplacian(&triangle(), LaplacianKind::Normalized).unwrap();
        let r = rescale(&l, 1.5).unwrap();
        assert!(matches!(rescale(&r, 1.5), Err(Error::Contract(_))));
        assert!(matches!(estimate_lambda_max(&r, 1e-6, 10), Err(Error::Contract(_))));
    }

    #[test]
    fn non_convergence_reports_best_estimate() {
        let g = SparseGraph::new(
            5,
            (0..4).map(|i| Edge::new(i, i + 1, 1.0 + i as f64)).collect(),
        )
        .unwrap();
        let l = laplacian(&g, LaplacianKind::Combinatorial).unwrap();
        let est = estimate_lambda_max(&l, 1e-14, 2).unwrap();
        assert!(!est.converged);
        assert_eq!(est.iterations, 2);
        assert!(est.value > 0.0);
    }

    #[test]
    fn kind_parses() {
        assert_eq!("normalized".parse::<LaplacianKind>().unwrap(), LaplacianKind::Normalized);
        assert!("rw".parse::<LaplacianKind>().is_err());
    }
}
