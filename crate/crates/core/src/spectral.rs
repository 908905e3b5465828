//! Polynomial spectral filters on a graph.
//!
//! Two evaluation routes for the same object:
//!
//! * [`exact_spectral_filter`] diagonalizes the Laplacian, `L = U Λ Uᵀ`, and
//!   applies `Σ_k θ_k U Λ^k Uᵀ x`. Dense, O(n³) setup and O(n²) per signal.
//! * [`chebyshev_filter`] evaluates `Σ_k θ_k T_k(L̃) x` with the three-term
//!   recursion, touching only the stored entries of `L̃`: O(K·|E|) per channel.
//!
//! [`chebyshev_from_monomial`] converts coefficients between the two so the
//! routes can be checked against each other.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{dim, Error, Result};
use crate::laplacian::LaplacianOp;

/// Largest operator the dense eigendecomposition path accepts by default.
pub const DENSE_LIMIT: usize = 2048;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Basis {
    Monomial,
    Chebyshev,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterCoefficients {
    basis: Basis,
    theta: Vec<f64>,
}

impl FilterCoefficients {
    pub fn new(basis: Basis, theta: Vec<f64>) -> Result<Self> {
        if theta.is_empty() {
            return Err(Error::Validation("filter needs at least one coefficient".into()));
        }
        if theta.iter().any(|t| !t.is_finite()) {
            return Err(Error::Validation("filter coefficients must be finite".into()));
        }
        Ok(FilterCoefficients { basis, theta })
    }

    pub fn monomial(theta: Vec<f64>) -> Result<Self> {
        Self::new(Basis::Monomial, theta)
    }

    pub fn chebyshev(theta: Vec<f64>) -> Result<Self> {
        Self::new(Basis::Chebyshev, theta)
    }

    pub fn basis(&self) -> Basis {
        self.basis
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    /// Number of coefficients, i.e. the kernel size K.
    pub fn order(&self) -> usize {
        self.theta.len()
    }
}

/// Signal on the nodes of a graph, one column per channel.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeSignal(DMatrix<f64>);

impl NodeSignal {
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation("node signal has non-finite entries".into()));
        }
        Ok(NodeSignal(values))
    }

    pub fn from_column(values: &[f64]) -> Result<Self> {
        Self::new(DMatrix::from_column_slice(values.len(), 1, values))
    }

    /// Unit impulse at `node` on an `n`-node graph.
    pub fn delta(n: usize, node: usize) -> Self {
        let mut m = DMatrix::zeros(n, 1);
        m[(node, 0)] = 1.0;
        NodeSignal(m)
    }

    pub fn n_nodes(&self) -> usize {
        self.0.nrows()
    }

    pub fn n_channels(&self) -> usize {
        self.0.ncols()
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }
}

impl From<NodeSignal> for DMatrix<f64> {
    fn from(s: NodeSignal) -> Self {
        s.0
    }
}

/// Eigenvalues (ascending) and orthonormal eigenvectors of a symmetric matrix.
/// Only the lower triangle is read.
pub fn symmetric_eigen(m: &DMatrix<f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
    if !m.is_square() {
        return Err(dim(format!("eigendecomposition of a {}x{} matrix", m.nrows(), m.ncols())));
    }
    let n = m.nrows();
    let fm = faer::Mat::<f64>::from_fn(n, n, |i, j| m[(i, j)]);
    let eig = fm
        .self_adjoint_eigen(faer::Side::Lower)
        .map_err(|e| Error::Domain(format!("eigendecomposition failed: {e:?}")))?;
    let (s, u) = (eig.S(), eig.U());
    Ok((DVector::from_fn(n, |i, _| s[i]), DMatrix::from_fn(n, n, |i, j| u[(i, j)])))
}

/// Eigendecomposition `L = U Λ Uᵀ` of a (small) Laplacian.
#[derive(Debug, Clone)]
pub struct FourierBasis {
    eigenvalues: DVector<f64>,
    eigenvectors: DMatrix<f64>,
}

impl FourierBasis {
    pub fn new(lap: &LaplacianOp) -> Result<Self> {
        Self::with_limit(lap, DENSE_LIMIT)
    }

    pub fn with_limit(lap: &LaplacianOp, limit: usize) -> Result<Self> {
        if lap.n() > limit {
            return Err(Error::Capability(format!(
                "dense spectral filtering is capped at {limit} nodes (got {}); use the chebyshev filter",
                lap.n()
            )));
        }
        let (eigenvalues, eigenvectors) = symmetric_eigen(&lap.to_dense())?;
        Ok(FourierBasis {
            eigenvalues,
            eigenvectors,
        })
    }

    pub fn eigenvalues(&self) -> &DVector<f64> {
        &self.eigenvalues
    }

    pub fn eigenvectors(&self) -> &DMatrix<f64> {
        &self.eigenvectors
    }

    /// Applies the scalar response `h(λ_i)` to every graph-frequency component.
    pub fn apply_response(&self, x: &DMatrix<f64>, h: impl Fn(f64) -> f64) -> Result<DMatrix<f64>> {
        if x.nrows() != self.eigenvalues.len() {
            return Err(dim(format!(
                "signal has {} rows, graph has {} nodes",
                x.nrows(),
                self.eigenvalues.len()
            )));
        }
        let u = &self.eigenvectors;
        let mut spectrum = u.transpose() * x;
        for (i, mut row) in spectrum.row_iter_mut().enumerate() {
            row *= h(self.eigenvalues[i]);
        }
        Ok(u * spectrum)
    }

    /// `Σ_k θ_k U Λ^k Uᵀ x` for monomial coefficients.
    pub fn filter(&self, x: &NodeSignal, theta: &FilterCoefficients) -> Result<NodeSignal> {
        if theta.basis() != Basis::Monomial {
            return Err(Error::Contract("exact spectral filter takes monomial coefficients".into()));
        }
        let coeffs = theta.theta();
        let out = self.apply_response(x.values(), |lambda| horner(coeffs, lambda))?;
        Ok(NodeSignal(out))
    }
}

/// Exact polynomial filter through a fresh dense eigendecomposition.
pub fn exact_spectral_filter(
    lap: &LaplacianOp,
    x: &NodeSignal,
    theta: &FilterCoefficients,
) -> Result<NodeSignal> {
    if theta.basis() != Basis::Monomial {
        return Err(Error::Contract("exact spectral filter takes monomial coefficients".into()));
    }
    check_rows(lap, x)?;
    FourierBasis::new(lap)?.filter(x, theta)
}

fn check_rows(lap: &LaplacianOp, x: &NodeSignal) -> Result<()> {
    if x.n_nodes() != lap.n() {
        return Err(dim(format!(
            "signal has {} rows, laplacian has {} nodes",
            x.n_nodes(),
            lap.n()
        )));
    }
    Ok(())
}

fn add_scaled(out: &mut DMatrix<f64>, alpha: f64, x: &DMatrix<f64>) {
    out.iter_mut().zip(x.iter()).for_each(|(o, v)| *o += alpha * v);
}

fn horner(coeffs: &[f64], x: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c)
}

/// Scalar Chebyshev series `Σ_k c_k T_k(x)` by Clenshaw's recurrence.
pub fn chebyshev_eval(coeffs: &[f64], x: f64) -> f64 {
    let (mut b1, mut b2) = (0.0, 0.0);
    for &c in coeffs.iter().skip(1).rev() {
        let b0 = c + 2.0 * x * b1 - b2;
        b2 = b1;
        b1 = b0;
    }
    coeffs.first().copied().unwrap_or(0.0) + x * b1 - b2
}

/// `[T_0(L̃) x, T_1(L̃) x, ..., T_{order-1}(L̃) x]`.
pub fn chebyshev_basis(lap: &LaplacianOp, x: &DMatrix<f64>, order: usize) -> Result<Vec<DMatrix<f64>>> {
    if !lap.is_rescaled() {
        return Err(Error::Contract("chebyshev recursion needs the rescaled laplacian".into()));
    }
    if x.nrows() != lap.n() {
        return Err(dim(format!("signal has {} rows, laplacian has {} nodes", x.nrows(), lap.n())));
    }
    let m = lap.matrix();
    let mut terms = Vec::with_capacity(order);
    if order == 0 {
        return Ok(terms);
    }
    terms.push(x.clone());
    if order > 1 {
        terms.push(m.mul_dense(x));
    }
    for k in 2..order {
        let mut next = DMatrix::zeros(x.nrows(), x.ncols());
        m.chebyshev_step_into(&terms[k - 1], &terms[k - 2], &mut next);
        terms.push(next);
    }
    Ok(terms)
}

/// `Σ_k T_k(L̃) g_k`, the adjoint of [`chebyshev_basis`] (the operator is
/// symmetric), evaluated with Clenshaw's recurrence in O(K·|E|).
pub fn chebyshev_adjoint(lap: &LaplacianOp, grads: &[DMatrix<f64>]) -> Result<DMatrix<f64>> {
    if !lap.is_rescaled() {
        return Err(Error::Contract("chebyshev recursion needs the rescaled laplacian".into()));
    }
    let Some(first) = grads.first() else {
        return Err(Error::Validation("no chebyshev terms to combine".into()));
    };
    let m = lap.matrix();
    let shape = first.shape();
    let mut b1 = DMatrix::zeros(shape.0, shape.1);
    let mut b2 = DMatrix::zeros(shape.0, shape.1);
    let mut scratch = DMatrix::zeros(shape.0, shape.1);
    for g in grads.iter().skip(1).rev() {
        // b0 = g + 2 L̃ b1 - b2
        m.chebyshev_step_into(&b1, &b2, &mut scratch);
        scratch += g;
        std::mem::swap(&mut b2, &mut b1);
        std::mem::swap(&mut b1, &mut scratch);
    }
    // g_0 + L̃ b1 - b2
    let mut out = m.mul_dense(&b1);
    out -= &b2;
    out += first;
    Ok(out)
}

/// `Σ_k θ_k T_k(L̃) x`, each channel filtered independently with shared θ.
pub fn chebyshev_filter(
    lap_rescaled: &LaplacianOp,
    x: &NodeSignal,
    theta: &FilterCoefficients,
) -> Result<NodeSignal> {
    if theta.basis() != Basis::Chebyshev {
        return Err(Error::Contract("chebyshev filter takes chebyshev coefficients".into()));
    }
    if !lap_rescaled.is_rescaled() {
        return Err(Error::Contract("chebyshev filter needs the rescaled laplacian".into()));
    }
    check_rows(lap_rescaled, x)?;

    let m = lap_rescaled.matrix();
    let coeffs = theta.theta();
    let xv = x.values();
    let mut out = xv * coeffs[0];
    if coeffs.len() == 1 {
        return Ok(NodeSignal(out));
    }
    let mut prev = xv.clone();
    let mut cur = m.mul_dense(xv);
    add_scaled(&mut out, coeffs[1], &cur);
    let mut next = DMatrix::zeros(xv.nrows(), xv.ncols());
    for &c in &coeffs[2..] {
        m.chebyshev_step_into(&cur, &prev, &mut next);
        add_scaled(&mut out, c, &next);
        std::mem::swap(&mut prev, &mut cur);
        std::mem::swap(&mut cur, &mut next);
    }
    Ok(NodeSignal(out))
}

/// Re-expresses `Σ_k a_k x^k` as `Σ_k c_k T_k(x)`.
pub fn chebyshev_from_monomial(theta_mono: &FilterCoefficients) -> Result<FilterCoefficients> {
    if theta_mono.basis() != Basis::Monomial {
        return Err(Error::Contract("expected monomial coefficients".into()));
    }
    let k = theta_mono.order();
    let mut out = vec![0.0; k];
    // power[j] holds the Chebyshev coefficients of x^p
    let mut power = vec![0.0; k];
    power[0] = 1.0;
    for (p, &a) in theta_mono.theta().iter().enumerate() {
        if p > 0 {
            // x * T_0 = T_1,  x * T_j = (T_{j+1} + T_{j-1}) / 2
            let mut next = vec![0.0; k];
            for j in 0..p {
                let c = power[j];
                if c == 0.0 {
                    continue;
                }
                if j == 0 {
                    next[1] += c;
                } else {
                    next[j + 1] += 0.5 * c;
                    next[j - 1] += 0.5 * c;
                }
            }
            power = next;
        }
        for (o, &c) in out.iter_mut().zip(&power) {
            *o += a * c;
        }
    }
    FilterCoefficients::chebyshev(out)
}

/// Re-expresses `Σ_k c_k T_k(x)` as `Σ_k a_k x^k`. Coefficients grow like
/// `(1 + √2)^K`, so this direction loses precision for large K.
pub fn monomial_from_chebyshev(theta_cheb: &FilterCoefficients) -> Result<FilterCoefficients> {
    if theta_cheb.basis() != Basis::Chebyshev {
        return Err(Error::Contract("expected chebyshev coefficients".into()));
    }
    let k = theta_cheb.order();
    let mut out = vec![0.0; k];
    let mut t_prev = vec![0.0; k];
    let mut t_cur = vec![0.0; k];
    t_cur[0] = 1.0;
    for (j, &c) in theta_cheb.theta().iter().enumerate() {
        if j == 1 {
            t_prev = std::mem::replace(&mut t_cur, vec![0.0; k]);
            t_cur[1] = 1.0;
        } else if j > 1 {
            let mut next = vec![0.0; k];
            for i in 0..k - 1 {
                next[i + 1] += 2.0 * t_cur[i];
            }
            for i in 0..k {
                next[i] -= t_prev[i];
            }
            t_prev = std::mem::replace(&mut t_cur, next);
        }
        for (o, &t) in out.iter_mut().zip(&t_cur) {
            *o += c * t;
        }
    }
    FilterCoefficients::monomial(out)
}
