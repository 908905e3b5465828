#![allow(dead_code)]

use hgconv_core::*;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Connected graph where every node is tied much more strongly to a fixed
/// partner than to anything else, recursively, so greedy heavy-edge matching
/// is perfect at every level: 2^levels-node blocks chained together.
pub fn nested_pairs_graph(n: usize, levels: usize) -> SparseGraph {
    let block = 1usize << levels;
    assert_eq!(n % block, 0);
    let mut edges = Vec::new();
    for base in (0..n).step_by(block) {
        let mut span = 1;
        let mut weight = 1000.0;
        while span < block {
            for start in (base..base + block).step_by(2 * span) {
                // one bridging edge between the two halves of each span-2 group
                edges.push(Edge::new(start + span - 1, start + span, weight));
            }
            span *= 2;
            weight /= 100.0;
        }
        if base > 0 {
            edges.push(Edge::new(base - 1, base, 1e-6));
        }
    }
    SparseGraph::new(n, edges).unwrap()
}

/// Erdős–Rényi style graph with uniform (0.1, 1] weights.
pub fn random_graph(n: usize, p: f64, rng: &mut ChaCha8Rng) -> SparseGraph {
    let mut edges = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            if rng.random::<f64>() < p {
                edges.push(Edge::new(i, j, 0.1 + 0.9 * rng.random::<f64>()));
            }
        }
    }
    SparseGraph::new(n, edges).unwrap()
}

pub fn random_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.random::<f64>() * 2.0 - 1.0)
}

pub fn path_graph(n: usize) -> SparseGraph {
    SparseGraph::new(n, (0..n - 1).map(|i| Edge::new(i, i + 1, 1.0)).collect()).unwrap()
}

/// Dense eigenvalues of a symmetric matrix, ascending.
pub fn dense_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    hgconv_core::spectral::symmetric_eigen(m).unwrap().0.iter().copied().collect()
}

pub fn tiny_network_config() -> NetworkConfig {
    NetworkConfig {
        k: 3,
        conv_channels: [2, 2, 2],
        fc_width: 4,
        n_classes: 2,
        dropout_keep: 0.5,
        laplacian_kind: LaplacianKind::Normalized,
        seed: 3,
    }
}

/// Tiny model (n = 8, K = 3, channels [2, 2, 2]) with every parameter,
/// biases included, moved off its initial value so no unit sits on a kink.
pub fn tiny_model(graph: &SparseGraph, seed: u64) -> ChebNetModel {
    let h = build_hierarchy(graph, 3, seed).unwrap();
    let mut model = init_model(&tiny_network_config(), h).unwrap();
    let mut r = rng(seed + 100);
    for (_, p) in model.parameters_mut() {
        for v in p.iter_mut() {
            *v = r.random::<f64>() * 1.6 - 0.8;
        }
    }
    model
}

pub struct GradCheck {
    pub name: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

impl GradCheck {
    pub fn rel_error(&self) -> f64 {
        let scale = self.analytic.abs().max(self.numeric.abs());
        if scale == 0.0 {
            0.0
        } else {
            (self.analytic - self.numeric).abs() / scale
        }
    }
}

/// Central finite differences of the batch loss for every parameter entry,
/// with the dropout mask held fixed by reseeding the mask stream.
pub fn finite_difference_sweep(model: &ChebNetModel, x: &DMatrix<f64>, labels: &[usize], eps: f64) -> Vec<GradCheck> {
    let mask_seed = 77;
    let (_, cache) = model.forward_train(x, &mut rng(mask_seed)).unwrap();
    let grads = model.backward(&cache, labels).unwrap();
    let names: Vec<String> = model.parameters().into_iter().map(|(n, _, _)| n).collect();

    let loss_at = |m: &ChebNetModel| {
        let (p, _) = m.forward_train(x, &mut rng(mask_seed)).unwrap();
        cross_entropy_loss(&p, labels).unwrap()
    };

    let mut out = Vec::new();
    let mut probe = model.clone();
    for (t, name) in names.iter().enumerate() {
        let len = grads.tensors[t].len();
        for j in 0..len {
            let orig = probe.parameters()[t].2[j];
            probe.parameters_mut()[t].1[j] = orig + eps;
            let up = loss_at(&probe);
            probe.parameters_mut()[t].1[j] = orig - eps;
            let down = loss_at(&probe);
            probe.parameters_mut()[t].1[j] = orig;
            out.push(GradCheck {
                name: name.clone(),
                index: j,
                analytic: grads.tensors[t][j],
                numeric: (up - down) / (2.0 * eps),
            });
        }
    }
    out
}
