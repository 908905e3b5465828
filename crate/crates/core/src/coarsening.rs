//! Multilevel coarsening by greedy heavy-edge matching, padded with fake
//! nodes so that every coarse node has exactly two children and pooling
//! becomes a stride-2 reduction over contiguous rows.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{dim, invalid, Result};
use crate::graph::{Edge, SparseGraph};
use crate::spectral::NodeSignal;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Matching {
    pub pairs: Vec<(usize, usize)>,
    pub singletons: Vec<usize>,
}

impl Matching {
    /// Checks that every node of an `n`-node graph is covered exactly once.
    pub fn validate(&self, n: usize) -> Result<()> {
        let mut seen = vec![false; n];
        let nodes = self
            .pairs
            .iter()
            .flat_map(|&(a, b)| [a, b])
            .chain(self.singletons.iter().copied());
        for v in nodes {
            if v >= n {
                return Err(invalid(format!("matching references node {v} of {n}")));
            }
            if std::mem::replace(&mut seen[v], true) {
                return Err(invalid(format!("node {v} matched twice")));
            }
        }
        if let Some(v) = seen.iter().position(|s| !s) {
            return Err(invalid(format!("node {v} missing from matching")));
        }
        Ok(())
    }
}

/// Greedy normalized heavy-edge matching over a seeded random visit order.
pub fn heavy_edge_matching(g: &SparseGraph, seed: u64) -> Matching {
    let mut order: Vec<usize> = (0..g.n()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    heavy_edge_matching_in_order(g, &order)
}

/// Each unmatched node, in `order`, pairs with the unmatched neighbor that
/// maximizes `w_ij (1/d_i + 1/d_j)`; ties go to the lower neighbor index.
pub fn heavy_edge_matching_in_order(g: &SparseGraph, order: &[usize]) -> Matching {
    let adj = g.adjacency();
    let deg = g.degrees();
    let inv = |d: f64| if d != 0.0 { 1.0 / d } else { 0.0 };
    let mut matched = vec![false; g.n()];
    let mut pairs = Vec::new();
    let mut singletons = Vec::new();

    for &u in order {
        if matched[u] {
            continue;
        }
        matched[u] = true;
        let mut best: Option<(usize, f64)> = None;
        for &(v, w) in &adj[u] {
            if matched[v] {
                continue;
            }
            let score = w * (inv(deg[u]) + inv(deg[v]));
            if best.is_none_or(|(_, s)| score > s) {
                best = Some((v, score));
            }
        }
        match best {
            Some((v, _)) => {
                matched[v] = true;
                pairs.push((u.min(v), u.max(v)));
            }
            None => singletons.push(u),
        }
    }
    Matching { pairs, singletons }
}

/// Contracts each matched pair and each singleton into one coarse node.
///
/// Coarse nodes are numbered by the smallest fine node they contain. Weights
/// between clusters are summed; weight inside a pair is dropped.
pub fn coarsen_once(g: &SparseGraph, m: &Matching) -> Result<(SparseGraph, Vec<usize>)> {
    m.validate(g.n())?;
    let mut clusters: Vec<Vec<usize>> = m
        .pairs
        .iter()
        .map(|&(a, b)| vec![a.min(b), a.max(b)])
        .chain(m.singletons.iter().map(|&s| vec![s]))
        .collect();
    clusters.sort_by_key(|c| c[0]);

    let mut parent = vec![0usize; g.n()];
    for (ci, members) in clusters.iter().enumerate() {
        for &v in members {
            parent[v] = ci;
        }
    }

    let mut sums: std::collections::BTreeMap<(usize, usize), f64> = Default::default();
    for e in g.edges() {
        let (a, b) = (parent[e.src], parent[e.dst]);
        if a != b {
            *sums.entry((a.min(b), a.max(b))).or_insert(0.0) += e.weight;
        }
    }
    let edges = sums
        .into_iter()
        .filter(|&(_, w)| w != 0.0)
        .map(|((a, b), w)| Edge::new(a, b, w))
        .collect();
    Ok((SparseGraph::new(clusters.len(), edges)?, parent))
}

/// Graph pyramid whose levels are laid out for stride-2 pooling.
///
/// Level `l` holds `2^(L-l)` times the coarsest size; the node at position
/// `p` of level `l` pools into position `p / 2` of level `l + 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoarseningHierarchy {
    n_real: usize,
    levels: Vec<SparseGraph>,
    parents: Vec<Vec<usize>>,
    perm: Vec<usize>,
    fake_counts: Vec<usize>,
}

/// Serializable summary of a hierarchy (what the `coarsen` command exports).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HierarchyMetadata {
    pub n_real: usize,
    pub level_sizes: Vec<usize>,
    pub fake_counts: Vec<usize>,
    pub edge_counts: Vec<usize>,
    pub perm: Vec<usize>,
}

pub fn build_hierarchy(g: &SparseGraph, n_levels: usize, seed: u64) -> Result<CoarseningHierarchy> {
    if n_levels == 0 {
        return Err(invalid("hierarchy needs at least one coarsening level"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // Unpadded pyramid.
    let mut graphs = vec![g.clone()];
    let mut children: Vec<Vec<Vec<usize>>> = Vec::with_capacity(n_levels);
    for _ in 0..n_levels {
        let fine = graphs.last().unwrap();
        let mut order: Vec<usize> = (0..fine.n()).collect();
        order.shuffle(&mut rng);
        let matching = heavy_edge_matching_in_order(fine, &order);
        let (coarse, parent) = coarsen_once(fine, &matching)?;
        let mut ch = vec![Vec::with_capacity(2); coarse.n()];
        for (v, &p) in parent.iter().enumerate() {
            ch[p].push(v);
        }
        children.push(ch);
        graphs.push(coarse);
    }

    // Pad top-down: a real coarse node keeps its children (plus a fake sibling
    // if it was a singleton), a fake coarse node gets two fake children.
    let mut orders: Vec<Vec<usize>> = vec![Vec::new(); n_levels + 1];
    orders[n_levels] = (0..graphs[n_levels].n()).collect();
    for l in (0..n_levels).rev() {
        let n_l = graphs[l].n();
        let mut next_fake = n_l;
        let mut fake = || {
            next_fake += 1;
            next_fake - 1
        };
        let mut order = Vec::with_capacity(2 * orders[l + 1].len());
        for &q in &orders[l + 1] {
            if q < graphs[l + 1].n() {
                let ch = &children[l][q];
                order.push(ch[0]);
                order.push(if ch.len() > 1 { ch[1] } else { fake() });
            } else {
                order.push(fake());
                order.push(fake());
            }
        }
        orders[l] = order;
    }

    let mut levels = Vec::with_capacity(n_levels + 1);
    let mut fake_counts = Vec::with_capacity(n_levels + 1);
    for (l, order) in orders.iter().enumerate() {
        let n_l = graphs[l].n();
        let size = order.len();
        let mut pos = vec![0usize; size];
        for (p, &v) in order.iter().enumerate() {
            pos[v] = p;
        }
        let fake: Vec<bool> = order.iter().map(|&v| v >= n_l).collect();
        let edges = graphs[l]
            .edges()
            .iter()
            .map(|e| Edge::new(pos[e.src], pos[e.dst], e.weight))
            .collect();
        fake_counts.push(size - n_l);
        levels.push(SparseGraph::with_fake(size, edges, fake)?);
    }
    let parents = (0..n_levels)
        .map(|l| (0..levels[l].n()).map(|p| p / 2).collect())
        .collect();

    Ok(CoarseningHierarchy {
        n_real: g.n(),
        levels,
        parents,
        perm: orders.swap_remove(0),
        fake_counts,
    })
}

impl CoarseningHierarchy {
    /// Number of nodes in the original graph.
    pub fn n_real(&self) -> usize {
        self.n_real
    }

    pub fn n_levels(&self) -> usize {
        self.levels.len() - 1
    }

    /// Padded graph at level `l`; level 0 is the original graph.
    pub fn level(&self, l: usize) -> &SparseGraph {
        &self.levels[l]
    }

    pub fn levels(&self) -> &[SparseGraph] {
        &self.levels
    }

    pub fn level_sizes(&self) -> Vec<usize> {
        self.levels.iter().map(SparseGraph::n).collect()
    }

    pub fn fake_counts(&self) -> &[usize] {
        &self.fake_counts
    }

    /// Parent position at level `l + 1` of every position at level `l`.
    pub fn parents(&self, l: usize) -> &[usize] {
        &self.parents[l]
    }

    /// Padded level-0 position -> original node index (`>= n_real` marks a fake node).
    pub fn perm(&self) -> &[usize] {
        &self.perm
    }

    pub fn metadata(&self) -> HierarchyMetadata {
        HierarchyMetadata {
            n_real: self.n_real,
            level_sizes: self.level_sizes(),
            fake_counts: self.fake_counts.clone(),
            edge_counts: self.levels.iter().map(SparseGraph::n_edges).collect(),
            perm: self.perm.clone(),
        }
    }

    /// Dense adjacency of each padded level.
    pub fn level_adjacency(&self, l: usize) -> DMatrix<f64> {
        self.levels[l].to_dense()
    }
}

/// Reorders the rows of `x` into the padded level-0 layout; fake rows are 0.
pub fn permute_signal(x: &NodeSignal, h: &CoarseningHierarchy) -> Result<NodeSignal> {
    NodeSignal::new(permute_rows(x.values(), h)?)
}

pub(crate) fn permute_rows(x: &DMatrix<f64>, h: &CoarseningHierarchy) -> Result<DMatrix<f64>> {
    if x.nrows() != h.n_real {
        return Err(dim(format!(
            "signal has {} rows, hierarchy expects {} real nodes",
            x.nrows(),
            h.n_real
        )));
    }
    let mut out = DMatrix::zeros(h.perm.len(), x.ncols());
    for (p, &v) in h.perm.iter().enumerate() {
        if v < h.n_real {
            out.set_row(p, &x.row(v));
        }
    }
    Ok(out)
}

/// Inverse of [`permute_signal`] on the real rows.
pub fn unpermute_signal(x: &NodeSignal, h: &CoarseningHierarchy) -> Result<NodeSignal> {
    if x.n_nodes() != h.perm.len() {
        return Err(dim(format!(
            "signal has {} rows, padded layout has {}",
            x.n_nodes(),
            h.perm.len()
        )));
    }
    let mut out = DMatrix::zeros(h.n_real, x.n_channels());
    for (p, &v) in h.perm.iter().enumerate() {
        if v < h.n_real {
            out.set_row(v, &x.values().row(p));
        }
    }
    NodeSignal::new(out)
}

/// Max over each contiguous group of `factor` rows, per channel.
pub fn pool(x: &NodeSignal, factor: usize) -> Result<NodeSignal> {
    let (out, _) = pool_with_argmax(x.values(), factor)?;
    NodeSignal::new(out)
}

/// Max pooling that also reports, per output cell, the winning input row
/// (first one on ties).
pub fn pool_with_argmax(x: &DMatrix<f64>, factor: usize) -> Result<(DMatrix<f64>, Vec<usize>)> {
    if factor == 0 || !x.nrows().is_multiple_of(factor) {
        return Err(dim(format!("{} rows cannot be pooled by {factor}", x.nrows())));
    }
    let rows = x.nrows() / factor;
    let mut out = DMatrix::zeros(rows, x.ncols());
    let mut argmax = vec![0usize; rows * x.ncols()];
    for c in 0..x.ncols() {
        let col = x.column(c);
        for r in 0..rows {
            let mut best = r * factor;
            for i in (r * factor + 1)..((r + 1) * factor) {
                if col[i] > col[best] {
                    best = i;
                }
            }
            out[(r, c)] = col[best];
            argmax[c * rows + r] = best;
        }
    }
    Ok((out, argmax))
}
