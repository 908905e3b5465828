//! Fixtures shared by the criterion benches.

use hgconv_core::benchmark::{random_operator, random_problem};
use hgconv_core::*;
use nalgebra::DMatrix;

pub struct FilterCase {
    pub graph: SparseGraph,
    pub lap: LaplacianOp,
    pub monomial: FilterCoefficients,
    pub chebyshev: FilterCoefficients,
    pub signal: NodeSignal,
}

pub fn filter_case(n: usize, density: f64, k: usize, seed: u64) -> FilterCase {
    let (graph, lap) = random_operator(n, density, seed).unwrap();
    let (monomial, signal) = random_problem(n, k, seed + 1).unwrap();
    let chebyshev = chebyshev_from_monomial(&monomial).unwrap();
    FilterCase {
        graph,
        lap,
        monomial,
        chebyshev,
        signal,
    }
}

/// Small planted dataset plus its inferred graph.
pub fn training_case(per_class: usize) -> (Dataset, SparseGraph) {
    let spec = SyntheticSpec {
        n_subjects_per_class: per_class,
        ..Default::default()
    };
    let (ds, _) = generate_synthetic(&spec).unwrap();
    let g = infer_graph(&pearson_correlation(ds.signals()).unwrap(), 0.7).unwrap();
    (ds, g)
}

pub fn batch(ds: &Dataset, size: usize) -> DMatrix<f64> {
    let cols: Vec<usize> = (0..size.min(ds.n_subjects())).collect();
    ds.signals().values().select_columns(&cols)
}
