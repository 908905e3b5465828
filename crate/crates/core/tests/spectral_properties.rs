mod common;

use common::*;
use hgconv_core::spectral::{chebyshev_adjoint, chebyshev_basis, chebyshev_eval, symmetric_eigen};
use hgconv_core::*;
use nalgebra::DMatrix;
use proptest::prelude::*;

fn graph_strategy(max_n: usize) -> impl Strategy<Value = SparseGraph> {
    (2..=max_n, 0.0f64..1.0, any::<u64>()).prop_map(|(n, p, seed)| random_graph(n, p, &mut rng(seed)))
}

/// Monomial filter applied through an independent dense eigendecomposition.
fn dense_monomial_filter(lap: &DMatrix<f64>, x: &DMatrix<f64>, theta: &[f64]) -> DMatrix<f64> {
    let (lambda, u) = symmetric_eigen(lap).unwrap();
    let h = lambda.map(|l| theta.iter().rev().fold(0.0, |acc, c| acc * l + c));
    &u * DMatrix::from_diagonal(&h) * u.transpose() * x
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn correlation_is_affine_invariant(seed in any::<u64>(), a in 0.1f64..5.0, b in -3.0f64..3.0) {
        let x = random_matrix(6, 12, &mut rng(seed));
        let c1 = pearson_correlation(&SignalMatrix::from_matrix(x.clone()).unwrap()).unwrap();
        let c2 = pearson_correlation(&SignalMatrix::from_matrix(x.map(|v| a * v + b)).unwrap()).unwrap();
        prop_assert!((c1.values() - c2.values()).abs().max() < 1e-10);
    }

    #[test]
    fn correlation_symmetric_unit_diagonal(seed in any::<u64>()) {
        let x = random_matrix(7, 9, &mut rng(seed));
        let c = pearson_correlation(&SignalMatrix::from_matrix(x).unwrap()).unwrap();
        let v = c.values();
        prop_assert_eq!(v, &v.transpose());
        for i in 0..7 {
            prop_assert!((v[(i, i)] - 1.0).abs() < 1e-12);
        }
        prop_assert!(v.iter().all(|r| r.abs() <= 1.0 + 1e-12));
    }

    #[test]
    fn edge_count_monotone_in_threshold(seed in any::<u64>(), t1 in 0.0f64..=1.0, t2 in 0.0f64..=1.0) {
        let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
        let c = pearson_correlation(&SignalMatrix::from_matrix(random_matrix(10, 8, &mut rng(seed))).unwrap()).unwrap();
        let e_lo = infer_graph(&c, lo).unwrap().n_edges();
        let e_hi = infer_graph(&c, hi).unwrap().n_edges();
        prop_assert!(e_hi <= e_lo);
    }

    #[test]
    fn laplacian_is_psd_with_constant_null_space(g in graph_strategy(15)) {
        let l = laplacian(&g, LaplacianKind::Combinatorial).unwrap().to_dense();
        prop_assert_eq!(&l, &l.transpose());
        let ev = dense_eigenvalues(&l);
        prop_assert!(ev[0] > -1e-9);
        let ones = DMatrix::from_element(g.n(), 1, 1.0);
        prop_assert!((&l * ones).abs().max() < 1e-12);
    }

    #[test]
    fn normalized_spectrum_in_zero_two(g in graph_strategy(15)) {
        let l = laplacian(&g, LaplacianKind::Normalized).unwrap().to_dense();
        let ev = dense_eigenvalues(&l);
        prop_assert!(ev[0] > -1e-9 && ev[ev.len() - 1] < 2.0 + 1e-9);
    }

    #[test]
    fn power_iteration_matches_dense_lambda_max(g in graph_strategy(50), combinatorial in any::<bool>()) {
        let kind = if combinatorial { LaplacianKind::Combinatorial } else { LaplacianKind::Normalized };
        let lap = laplacian(&g, kind).unwrap();
        let est = estimate_lambda_max(&lap, 1e-10, 20_000).unwrap();
        let want = *dense_eigenvalues(&lap.to_dense()).last().unwrap();
        // a residual of r bounds the Rayleigh quotient error by r^2 / gap, and the
        // estimate can never exceed the true maximum
        prop_assert!(est.value <= want + 1e-9);
        if est.converged {
            prop_assert!((est.value - want).abs() <= 1e-6 * want.max(1.0), "{} vs {}", est.value, want);
        }
    }

    #[test]
    fn rescaled_spectrum_in_unit_interval(g in graph_strategy(30), combinatorial in any::<bool>()) {
        let kind = if combinatorial { LaplacianKind::Combinatorial } else { LaplacianKind::Normalized };
        let lap = rescaled_laplacian(&g, kind).unwrap();
        let ev = dense_eigenvalues(&lap.to_dense());
        prop_assert!(ev[0] >= -1.0 - 1e-9 && ev[ev.len() - 1] <= 1.0 + 1e-9, "{:?}", ev);
    }

    #[test]
    fn chebyshev_filter_matches_dense_monomial(g in graph_strategy(20), k in 1usize..=8, seed in any::<u64>()) {
        let lap = rescaled_laplacian(&g, LaplacianKind::Normalized).unwrap();
        let mut r = rng(seed);
        let theta: Vec<f64> = random_matrix(k, 1, &mut r).iter().copied().collect();
        let x = random_matrix(g.n(), 2, &mut r);
        let want = dense_monomial_filter(&lap.to_dense(), &x, &theta);
        let cheb = chebyshev_from_monomial(&FilterCoefficients::monomial(theta).unwrap()).unwrap();
        let got = chebyshev_filter(&lap, &NodeSignal::new(x).unwrap(), &cheb).unwrap();
        let err = (got.values() - &want).abs().max();
        prop_assert!(err <= 1e-9, "n={} k={} err={:e}", g.n(), k, err);
    }

    #[test]
    fn filter_is_linear(g in graph_strategy(20), k in 1usize..=8, seed in any::<u64>(), a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let lap = rescaled_laplacian(&g, LaplacianKind::Normalized).unwrap();
        let mut r = rng(seed);
        let theta = FilterCoefficients::chebyshev(random_matrix(k, 1, &mut r).iter().copied().collect()).unwrap();
        let x = random_matrix(g.n(), 1, &mut r);
        let y = random_matrix(g.n(), 1, &mut r);
        let f = |v: DMatrix<f64>| chebyshev_filter(&lap, &NodeSignal::new(v).unwrap(), &theta).unwrap().into_inner();
        let lhs = f(&x * a + &y * b);
        let rhs = f(x) * a + f(y) * b;
        prop_assert!((lhs - rhs).abs().max() <= 1e-9);
    }

    #[test]
    fn coefficient_conversion_round_trips(theta in prop::collection::vec(-5.0f64..5.0, 1..10)) {
        let mono = FilterCoefficients::monomial(theta.clone()).unwrap();
        let back = monomial_from_chebyshev(&chebyshev_from_monomial(&mono).unwrap()).unwrap();
        for (a, b) in back.theta().iter().zip(&theta) {
            prop_assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn chebyshev_series_evaluates_to_same_polynomial(theta in prop::collection::vec(-2.0f64..2.0, 1..10), x in -1.0f64..1.0) {
        let cheb = chebyshev_from_monomial(&FilterCoefficients::monomial(theta.clone()).unwrap()).unwrap();
        let mono = theta.iter().rev().fold(0.0, |acc, c| acc * x + c);
        prop_assert!((chebyshev_eval(cheb.theta(), x) - mono).abs() < 1e-10);
    }

    #[test]
    fn adjoint_is_transpose_of_basis(g in graph_strategy(15), k in 1usize..=6, seed in any::<u64>()) {
        // <T_k x, g_k> summed over k equals <x, sum_k T_k g_k>
        let lap = rescaled_laplacian(&g, LaplacianKind::Normalized).unwrap();
        let mut r = rng(seed);
        let x = random_matrix(g.n(), 2, &mut r);
        let grads: Vec<DMatrix<f64>> = (0..k).map(|_| random_matrix(g.n(), 2, &mut r)).collect();
        let basis = chebyshev_basis(&lap, &x, k).unwrap();
        let lhs: f64 = basis.iter().zip(&grads).map(|(t, gk)| t.dot(gk)).sum();
        let rhs = x.dot(&chebyshev_adjoint(&lap, &grads).unwrap());
        prop_assert!((lhs - rhs).abs() <= 1e-9 * lhs.abs().max(1.0));
    }
}

#[test]
fn unit_coefficients_stay_within_k_hops() {
    let g = path_graph(30);
    let lap = rescaled_laplacian(&g, LaplacianKind::Normalized).unwrap();
    for k in 0..8 {
        let theta = FilterCoefficients::chebyshev(vec![1.0; k + 1]).unwrap();
        let y = chebyshev_filter(&lap, &NodeSignal::delta(30, 12), &theta).unwrap();
        let dist = g.hop_distances(12);
        for (i, d) in dist.iter().enumerate() {
            let d = d.unwrap();
            if d > k {
                assert_eq!(y.values()[(i, 0)], 0.0, "k={k} node {i}");
            }
        }
        assert_ne!(y.values()[(12 + k, 0)], 0.0);
    }
}

#[test]
fn zero_laplacian_rescales_to_minus_identity() {
    let lap = rescaled_laplacian(&SparseGraph::empty(4), LaplacianKind::Normalized).unwrap();
    assert_eq!(lap.to_dense(), -DMatrix::<f64>::identity(4, 4));
}

