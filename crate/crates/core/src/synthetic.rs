//! Planted-community signal generator used in place of restricted imaging data.
//!
//! Every subject draws one latent factor per community. A node's signal is
//! `baseline + offset[class][community] + strength * latent + noise_std * e`,
//! so nodes of one community correlate at about
//! `strength² / (strength² + noise_std²)` within a class, and the ground
//! truth graph joins every intra-community pair.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Edge, SignalMatrix, SparseGraph};
use crate::training::Dataset;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSpec {
    pub n_nodes: usize,
    pub n_subjects_per_class: usize,
    pub n_classes: usize,
    pub block_sizes: Vec<usize>,
    pub strength: f64,
    pub noise_std: f64,
    /// `offsets[class][community]`; empty means [`SyntheticSpec::default_offsets`].
    pub offsets: Vec<Vec<f64>>,
    /// Shift used by the default offsets.
    pub class_offset: f64,
    pub baseline: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            n_nodes: 120,
            n_subjects_per_class: 100,
            n_classes: 2,
            block_sizes: vec![30; 4],
            strength: 0.9,
            noise_std: 0.3,
            offsets: Vec::new(),
            class_offset: 2.5,
            baseline: 1.0,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    /// Equal communities of `n_nodes / communities` (the last absorbs the remainder).
    pub fn with_communities(mut self, communities: usize) -> Self {
        let base = self.n_nodes / communities.max(1);
        let mut sizes = vec![base; communities.max(1)];
        *sizes.last_mut().unwrap() += self.n_nodes - base * sizes.len();
        self.block_sizes = sizes;
        self
    }

    /// Class `c` shifts community `c mod communities` by `class_offset`.
    pub fn default_offsets(&self) -> Vec<Vec<f64>> {
        let k = self.block_sizes.len();
        (0..self.n_classes)
            .map(|c| (0..k).map(|b| if b == c % k { self.class_offset } else { 0.0 }).collect())
            .collect()
    }

    pub fn resolved_offsets(&self) -> Vec<Vec<f64>> {
        if self.offsets.is_empty() {
            self.default_offsets()
        } else {
            self.offsets.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.block_sizes.iter().sum::<usize>() != self.n_nodes {
            return bad(format!(
                "community sizes sum to {}, not {}",
                self.block_sizes.iter().sum::<usize>(),
                self.n_nodes
            ));
        }
        if self.block_sizes.contains(&0) {
            return bad("empty community".into());
        }
        if self.n_classes < 2 || self.n_subjects_per_class == 0 {
            return bad("need at least 2 non-empty classes".into());
        }
        if !(self.strength > 0.0 && self.strength.is_finite()) {
            return bad("correlation strength must be positive".into());
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return bad("noise std must be non-negative".into());
        }
        if !self.class_offset.is_finite() {
            return bad("class offset must be finite".into());
        }
        let offsets = self.resolved_offsets();
        if offsets.len() != self.n_classes || offsets.iter().any(|o| o.len() != self.block_sizes.len()) {
            return bad("offsets must be n_classes x communities".into());
        }
        Ok(())
    }

    /// Community index of every node.
    pub fn communities(&self) -> Vec<usize> {
        self.block_sizes
            .iter()
            .enumerate()
            .flat_map(|(b, &s)| std::iter::repeat_n(b, s))
            .collect()
    }
}

/// Complete graph inside every community, unit weights.
pub fn planted_graph(spec: &SyntheticSpec) -> Result<SparseGraph> {
    let mut edges = Vec::new();
    let mut start = 0;
    for &size in &spec.block_sizes {
        for i in start..start + size {
            for j in (i + 1)..start + size {
                edges.push(Edge::new(i, j, 1.0));
            }
        }
        start += size;
    }
    SparseGraph::new(spec.n_nodes, edges)
}

/// Subjects are emitted class by class, `n_subjects_per_class` each.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<(Dataset, SparseGraph)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let community = spec.communities();
    let offsets = spec.resolved_offsets();
    let n_comm = spec.block_sizes.len();
    let m = spec.n_subjects_per_class * spec.n_classes;

    let mut values = DMatrix::zeros(spec.n_nodes, m);
    let mut labels = Vec::with_capacity(m);
    for (c, class_offsets) in offsets.iter().enumerate() {
        for s in 0..spec.n_subjects_per_class {
            let col = c * spec.n_subjects_per_class + s;
            let latent: Vec<f64> = (0..n_comm).map(|_| StandardNormal.sample(&mut rng)).collect();
            for i in 0..spec.n_nodes {
                let b = community[i];
                let e: f64 = StandardNormal.sample(&mut rng);
                values[(i, col)] = spec.baseline + class_offsets[b] + spec.strength * latent[b] + spec.noise_std * e;
            }
            labels.push(c);
        }
    }
    let node_ids = (0..spec.n_nodes).map(|i| format!("roi{i}")).collect();
    let subject_ids = (0..m).map(|j| format!("subj{j:04}")).collect();
    let class_names = (0..spec.n_classes).map(|c| format!("class{c}")).collect();
    let ds = Dataset::new(SignalMatrix::new(values, node_ids, subject_ids)?, labels, class_names)?;
    Ok((ds, planted_graph(spec)?))
}

/// Edge-set agreement between an inferred and a planted graph.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecoveryStats {
    pub true_edges: usize,
    pub inferred_edges: usize,
    pub true_positive: usize,
    /// Fraction of planted edges found.
    pub recall: f64,
    /// Fraction of inferred edges that are not planted.
    pub false_edge_rate: f64,
}

pub fn edge_recovery(inferred: &SparseGraph, truth: &SparseGraph) -> RecoveryStats {
    let planted: std::collections::HashSet<(usize, usize)> = truth.edges().iter().map(|e| (e.src, e.dst)).collect();
    let tp = inferred
        .edges()
        .iter()
        .filter(|e| planted.contains(&(e.src, e.dst)))
        .count();
    let fp = inferred.n_edges() - tp;
    RecoveryStats {
        true_edges: truth.n_edges(),
        inferred_edges: inferred.n_edges(),
        true_positive: tp,
        recall: if truth.n_edges() == 0 { 1.0 } else { tp as f64 / truth.n_edges() as f64 },
        false_edge_rate: if inferred.n_edges() == 0 { 0.0 } else { fp as f64 / inferred.n_edges() as f64 },
    }
}
