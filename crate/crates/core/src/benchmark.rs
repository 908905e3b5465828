//! Timing kernels comparing the dense eigenbasis filter with the sparse
//! Chebyshev recursion.

use std::time::Instant;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::graph::SparseGraph;
use crate::laplacian::{rescaled_laplacian, LaplacianKind, LaplacianOp};
use crate::spectral::{chebyshev_filter, chebyshev_from_monomial, exact_spectral_filter, FilterCoefficients, NodeSignal};
use crate::training::{baseline_graph, BaselineKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub n: usize,
    pub edges: usize,
    #[serde(rename = "K")]
    pub k: usize,
    pub method: String,
    pub seconds: f64,
    /// Max absolute difference between the two methods; None when only one ran.
    pub max_abs_err: Option<f64>,
}

/// Random graph with `density * n(n-1)/2` edges and its rescaled normalized Laplacian.
pub fn random_operator(n: usize, density: f64, seed: u64) -> Result<(SparseGraph, LaplacianOp)> {
    let pairs = n * n.saturating_sub(1) / 2;
    let edges = ((density * pairs as f64).round() as usize).min(pairs);
    let g = baseline_graph(BaselineKind::Random, n, edges, seed)?;
    let lap = rescaled_laplacian(&g, LaplacianKind::Normalized)?;
    Ok((g, lap))
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.total_cmp(b));
    v[v.len() / 2]
}

/// Median wall time of `repeats` Chebyshev filter applications.
pub fn time_chebyshev(lap: &LaplacianOp, x: &NodeSignal, theta: &FilterCoefficients, repeats: usize) -> Result<(f64, NodeSignal)> {
    let mut times = Vec::with_capacity(repeats.max(1));
    let mut out = None;
    for _ in 0..repeats.max(1) {
        let t = Instant::now();
        let y = chebyshev_filter(lap, x, theta)?;
        times.push(t.elapsed().as_secs_f64());
        out = Some(y);
    }
    Ok((median(times), out.unwrap()))
}

/// Wall time of one exact filter, eigendecomposition included.
pub fn time_exact(lap: &LaplacianOp, x: &NodeSignal, theta: &FilterCoefficients) -> Result<(f64, NodeSignal)> {
    let t = Instant::now();
    let y = exact_spectral_filter(lap, x, theta)?;
    Ok((t.elapsed().as_secs_f64(), y))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub n: usize,
    pub k: usize,
    pub densities: Vec<f64>,
    pub repeats: usize,
    /// Run the dense path only up to this size.
    pub exact_limit: usize,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            n: 512,
            k: 25,
            densities: vec![0.01, 0.02],
            repeats: 5,
            exact_limit: crate::spectral::DENSE_LIMIT,
            seed: 0,
        }
    }
}

/// Random monomial coefficients and one random signal channel.
pub fn random_problem(n: usize, k: usize, seed: u64) -> Result<(FilterCoefficients, NodeSignal)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let theta: Vec<f64> = (0..k).map(|_| StandardNormal.sample(&mut rng)).collect();
    let x = DMatrix::from_fn(n, 1, |_, _| StandardNormal.sample(&mut rng));
    Ok((FilterCoefficients::monomial(theta)?, NodeSignal::new(x)?))
}

/// One `chebyshev` row per density, plus an `exact` row when `n` is within
/// the dense limit; both then carry the max-abs disagreement.
pub fn run_filter_benchmark(cfg: &BenchConfig) -> Result<Vec<BenchRow>> {
    let mut rows = Vec::new();
    for (i, &density) in cfg.densities.iter().enumerate() {
        let (g, lap) = random_operator(cfg.n, density, cfg.seed.wrapping_add(i as u64))?;
        let (mono, x) = random_problem(cfg.n, cfg.k, cfg.seed.wrapping_add(1000 + i as u64))?;
        let cheb = chebyshev_from_monomial(&mono)?;
        let (t_cheb, y_cheb) = time_chebyshev(&lap, &x, &cheb, cfg.repeats)?;
        let exact = if cfg.n <= cfg.exact_limit {
            Some(time_exact(&lap, &x, &mono)?)
        } else {
            None
        };
        let err = exact
            .as_ref()
            .map(|(_, y)| (y.values() - y_cheb.values()).abs().max());
        rows.push(BenchRow {
            n: cfg.n,
            edges: g.n_edges(),
            k: cfg.k,
            method: "chebyshev".into(),
            seconds: t_cheb,
            max_abs_err: err,
        });
        if let Some((t_exact, _)) = exact {
            rows.push(BenchRow {
                n: cfg.n,
                edges: g.n_edges(),
                k: cfg.k,
                method: "exact".into(),
                seconds: t_exact,
                max_abs_err: err,
            });
        }
    }
    Ok(rows)
}

pub fn write_bench_csv(rows: &[BenchRow], path: &std::path::Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["n", "edges", "K", "method", "seconds", "max_abs_err"])?;
    for r in rows {
        w.write_record([
            r.n.to_string(),
            r.edges.to_string(),
            r.k.to_string(),
            r.method.clone(),
            format!("{:.9}", r.seconds),
            r.max_abs_err.map(|e| format!("{e:e}")).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_benchmark_methods_agree() {
        let cfg = BenchConfig {
            n: 64,
            k: 6,
            densities: vec![0.05, 0.1],
            repeats: 1,
            ..Default::default()
        };
        let rows = run_filter_benchmark(&cfg).unwrap();
        assert_eq!(rows.len(), 4);
        for r in &rows {
            assert!(r.max_abs_err.unwrap() < 1e-10, "{r:?}");
        }
        assert!(rows[2].edges > rows[0].edges);
    }

    #[test]
    fn exact_skipped_past_limit() {
        let cfg = BenchConfig {
            n: 40,
            k: 3,
            densities: vec![0.1],
            repeats: 1,
            exact_limit: 10,
            seed: 1,
        };
        let rows = run_filter_benchmark(&cfg).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].max_abs_err, None);
    }
}
