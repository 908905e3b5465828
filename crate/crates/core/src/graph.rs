//! Node signals, correlation-inferred graphs and their sparse representation.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{dim, invalid, Result};

/// Node-by-subject signal matrix: one row per node, one column per subject.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalMatrix {
    values: DMatrix<f64>,
    node_ids: Vec<String>,
    subject_ids: Vec<String>,
}

impl SignalMatrix {
    pub fn new(values: DMatrix<f64>, node_ids: Vec<String>, subject_ids: Vec<String>) -> Result<Self> {
        if values.nrows() != node_ids.len() {
            return Err(dim(format!(
                "{} signal rows but {} node ids",
                values.nrows(),
                node_ids.len()
            )));
        }
        if values.ncols() != subject_ids.len() {
            return Err(dim(format!(
                "{} signal columns but {} subject ids",
                values.ncols(),
                subject_ids.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            let (r, c) = (pos % values.nrows(), pos / values.nrows());
            return Err(invalid(format!("non-finite signal value at row {r}, column {c}")));
        }
        Ok(SignalMatrix {
            values,
            node_ids,
            subject_ids,
        })
    }

    /// Wraps a bare matrix, naming nodes `n0..` and subjects `s0..`.
    pub fn from_matrix(values: DMatrix<f64>) -> Result<Self> {
        let nodes = (0..values.nrows()).map(|i| format!("n{i}")).collect();
        let subjects = (0..values.ncols()).map(|j| format!("s{j}")).collect();
        Self::new(values, nodes, subjects)
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn node_ids(&self) -> &[String] {
        &self.node_ids
    }

    pub fn subject_ids(&self) -> &[String] {
        &self.subject_ids
    }

    pub fn n_nodes(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_subjects(&self) -> usize {
        self.values.ncols()
    }

    /// Keeps only the listed subject columns, in the given order.
    pub fn select_subjects(&self, columns: &[usize]) -> SignalMatrix {
        SignalMatrix {
            values: self.values.select_columns(columns),
            node_ids: self.node_ids.clone(),
            subject_ids: columns.iter().map(|&c| self.subject_ids[c].clone()).collect(),
        }
    }
}

/// Symmetric node-by-node Pearson correlation matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrMatrix {
    values: DMatrix<f64>,
}

impl CorrMatrix {
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        if values.nrows() != values.ncols() {
            return Err(dim("correlation matrix must be square"));
        }
        let n = values.nrows();
        for i in 0..n {
            for j in 0..n {
                let v = values[(i, j)];
                if !v.is_finite() || !(-1.0..=1.0).contains(&v) {
                    return Err(invalid(format!("correlation ({i}, {j}) = {v} outside [-1, 1]")));
                }
                if (v - values[(j, i)]).abs() > 1e-12 {
                    return Err(invalid(format!("correlation matrix not symmetric at ({i}, {j})")));
                }
            }
        }
        Ok(CorrMatrix { values })
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }
}

/// Pearson correlation between every pair of node rows across subjects.
///
/// Rows with zero variance correlate 0 with everything, themselves included,
/// so constant nodes end up isolated instead of poisoning the matrix with NaN.
pub fn pearson_correlation(signals: &SignalMatrix) -> Result<CorrMatrix> {
    let x = signals.values();
    let (n, m) = x.shape();
    if m < 2 {
        return Err(dim(format!("correlation needs at least 2 subjects, got {m}")));
    }

    // Centered, unit-norm rows; None marks a zero-variance row.
    let mut rows: Vec<Option<Vec<f64>>> = Vec::with_capacity(n);
    for i in 0..n {
        let row: Vec<f64> = x.row(i).iter().copied().collect();
        let mean = row.iter().sum::<f64>() / m as f64;
        let centered: Vec<f64> = row.iter().map(|v| v - mean).collect();
        let norm = centered.iter().map(|v| v * v).sum::<f64>().sqrt();
        let scale = row.iter().fold(0.0f64, |a, v| a.max(v.abs())) * (m as f64).sqrt();
        if norm <= 1e-12 * scale || norm == 0.0 {
            rows.push(None);
        } else {
            rows.push(Some(centered.into_iter().map(|v| v / norm).collect()));
        }
    }

    let mut corr = DMatrix::zeros(n, n);
    for i in 0..n {
        let Some(ri) = &rows[i] else { continue };
        corr[(i, i)] = 1.0;
        for j in (i + 1)..n {
            let Some(rj) = &rows[j] else { continue };
            let r = ri.iter().zip(rj).map(|(a, b)| a * b).sum::<f64>().clamp(-1.0, 1.0);
            corr[(i, j)] = r;
            corr[(j, i)] = r;
        }
    }
    Ok(CorrMatrix { values: corr })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub src: usize,
    pub dst: usize,
    pub weight: f64,
}

impl Edge {
    pub fn new(src: usize, dst: usize, weight: f64) -> Self {
        Edge { src, dst, weight }
    }
}

/// Weighted undirected graph stored as an upper-triangular edge list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseGraph {
    n: usize,
    edges: Vec<Edge>,
    fake: Vec<bool>,
}

impl SparseGraph {
    /// Validates and canonicalizes an edge list. Edges given as `(j, i)` with
    /// `j > i` are flipped; self-loops, duplicates and zero or non-finite
    /// weights are rejected.
    pub fn new(n: usize, edges: Vec<Edge>) -> Result<Self> {
        Self::with_fake(n, edges, vec![false; n])
    }

    pub fn with_fake(n: usize, edges: Vec<Edge>, fake: Vec<bool>) -> Result<Self> {
        if fake.len() != n {
            return Err(dim(format!("{} fake flags for {n} nodes", fake.len())));
        }
        let mut edges: Vec<Edge> = edges
            .into_iter()
            .map(|e| {
                if e.src > e.dst {
                    Edge::new(e.dst, e.src, e.weight)
                } else {
                    e
                }
            })
            .collect();
        for e in &edges {
            if e.src == e.dst {
                return Err(invalid(format!("self-loop at node {}", e.src)));
            }
            if e.dst >= n {
                return Err(invalid(format!("edge ({}, {}) out of range for {n} nodes", e.src, e.dst)));
            }
            if !e.weight.is_finite() || e.weight == 0.0 {
                return Err(invalid(format!(
                    "edge ({}, {}) has invalid weight {}",
                    e.src, e.dst, e.weight
                )));
            }
            if fake[e.src] || fake[e.dst] {
                return Err(invalid(format!("edge ({}, {}) touches a fake node", e.src, e.dst)));
            }
        }
        edges.sort_by_key(|e| (e.src, e.dst));
        if let Some(w) = edges.windows(2).find(|w| (w[0].src, w[0].dst) == (w[1].src, w[1].dst)) {
            return Err(invalid(format!("duplicate edge ({}, {})", w[0].src, w[0].dst)));
        }
        Ok(SparseGraph { n, edges, fake })
    }

    pub fn empty(n: usize) -> Self {
        SparseGraph {
            n,
            edges: Vec::new(),
            fake: vec![false; n],
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn is_fake(&self, node: usize) -> bool {
        self.fake[node]
    }

    pub fn n_fake(&self) -> usize {
        self.fake.iter().filter(|&&f| f).count()
    }

    pub fn total_weight(&self) -> f64 {
        self.edges.iter().map(|e| e.weight).sum()
    }

    /// Neighbor lists sorted by neighbor index.
    pub fn adjacency(&self) -> Vec<Vec<(usize, f64)>> {
        let mut adj = vec![Vec::new(); self.n];
        for e in &self.edges {
            adj[e.src].push((e.dst, e.weight));
            adj[e.dst].push((e.src, e.weight));
        }
        for list in &mut adj {
            list.sort_by_key(|&(j, _)| j);
        }
        adj
    }

    /// Weighted degree of every node.
    pub fn degrees(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.n];
        for e in &self.edges {
            d[e.src] += e.weight;
            d[e.dst] += e.weight;
        }
        d
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut w = DMatrix::zeros(self.n, self.n);
        for e in &self.edges {
            w[(e.src, e.dst)] = e.weight;
            w[(e.dst, e.src)] = e.weight;
        }
        w
    }

    /// Unweighted shortest-path distances from `source` (None when unreachable).
    pub fn hop_distances(&self, source: usize) -> Vec<Option<usize>> {
        let adj = self.adjacency();
        let mut dist = vec![None; self.n];
        let mut queue = std::collections::VecDeque::new();
        dist[source] = Some(0);
        queue.push_back(source);
        while let Some(u) = queue.pop_front() {
            let du = dist[u].unwrap();
            for &(v, _) in &adj[u] {
                if dist[v].is_none() {
                    dist[v] = Some(du + 1);
                    queue.push_back(v);
                }
            }
        }
        dist
    }
}

/// Keeps every pair whose signed correlation strictly exceeds `threshold`.
pub fn infer_graph(corr: &CorrMatrix, threshold: f64) -> Result<SparseGraph> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(invalid(format!("threshold {threshold} outside [0, 1]")));
    }
    let c = corr.values();
    let n = corr.n();
    let mut edges = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            let r = c[(i, j)];
            if r > threshold {
                edges.push(Edge::new(i, j, r));
            }
        }
    }
    Ok(SparseGraph {
        n,
        edges,
        fake: vec![false; n],
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rows(data: &[&[f64]]) -> SignalMatrix {
        let m = data[0].len();
        let flat: Vec<f64> = data.iter().flat_map(|r| r.iter().copied()).collect();
        SignalMatrix::from_matrix(DMatrix::from_row_slice(data.len(), m, &flat)).unwrap()
    }

    #[test]
    fn perfect_correlations() {
        let c = pearson_correlation(&rows(&[&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0], &[3.0, 2.0, 1.0]])).unwrap();
        assert!((c.values()[(0, 1)] - 1.0).abs() < 1e-15);
        assert!((c.values()[(0, 2)] + 1.0).abs() < 1e-15);
        assert_eq!(c.values()[(1, 1)], 1.0);
    }

    #[test]
    fn partial_correlation_value() {
        let c = pearson_correlation(&rows(&[&[1.0, 2.0, 3.0], &[1.0, 1.0, 2.0]])).unwrap();
        assert!((c.values()[(0, 1)] - 3f64.sqrt() / 2.0).abs() < 1e-12);
    }

    #[test]
    fn constant_row_is_uncorrelated() {
        let c = pearson_correlation(&rows(&[&[5.0, 5.0, 5.0], &[1.0, 2.0, 4.0]])).unwrap();
        assert_eq!(c.values()[(0, 1)], 0.0);
        assert_eq!(c.values()[(1, 0)], 0.0);
        assert_eq!(c.values()[(0, 0)], 0.0);
        assert_eq!(c.values()[(1, 1)], 1.0);
        // ulp-level jitter in the mean must not make a constant row look variable
        let c = pearson_correlation(&rows(&[&[0.1, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1], &[1.0, 2.0, 4.0, 0.0, 1.0, 2.0, 3.0]])).unwrap();
        assert_eq!(c.values()[(0, 1)], 0.0);
    }

    #[test]
    fn correlation_needs_two_subjects() {
        let err = pearson_correlation(&rows(&[&[1.0], &[2.0]])).unwrap_err();
        assert!(matches!(err, crate::Error::Dimension(_)));
    }

    #[test]
    fn non_finite_signals_rejected() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, f64::NAN, 0.0, 1.0]);
        let err = SignalMatrix::from_matrix(m).unwrap_err();
        assert!(matches!(err, crate::Error::Validation(_)));
        assert!(err.to_string().contains("row 0, column 1"));
    }

    #[test]
    fn threshold_rule() {
        let c = CorrMatrix::new(DMatrix::from_row_slice(
            3,
            3,
            &[1.0, 0.9, 0.3, 0.9, 1.0, 0.75, 0.3, 0.75, 1.0],
        ))
        .unwrap();
        let g = infer_graph(&c, 0.7).unwrap();
        assert_eq!(g.edges(), &[Edge::new(0, 1, 0.9), Edge::new(1, 2, 0.75)]);

        let id = CorrMatrix::new(DMatrix::identity(3, 3)).unwrap();
        assert_eq!(infer_graph(&id, 0.7).unwrap().n_edges(), 0);

        let ones = CorrMatrix::new(DMatrix::from_element(4, 4, 1.0)).unwrap();
        let g = infer_graph(&ones, 0.7).unwrap();
        assert_eq!(g.n_edges(), 6);
        assert!(g.edges().iter().all(|e| e.weight == 1.0));
    }

    #[test]
    fn threshold_is_strict_and_signed() {
        let c = CorrMatrix::new(DMatrix::from_row_slice(3, 3, &[1.0, 0.7, -0.95, 0.7, 1.0, 0.0, -0.95, 0.0, 1.0])).unwrap();
        assert_eq!(infer_graph(&c, 0.7).unwrap().n_edges(), 0);
        assert!(infer_graph(&c, 1.5).is_err());
    }

    #[test]
    fn graph_validation() {
        assert!(SparseGraph::new(2, vec![Edge::new(0, 0, 1.0)]).is_err());
        assert!(SparseGraph::new(2, vec![Edge::new(0, 2, 1.0)]).is_err());
        assert!(SparseGraph::new(2, vec![Edge::new(0, 1, 0.0)]).is_err());
        assert!(SparseGraph::new(2, vec![Edge::new(0, 1, 1.0), Edge::new(1, 0, 2.0)]).is_err());
        let g = SparseGraph::new(3, vec![Edge::new(2, 1, 0.5)]).unwrap();
        assert_eq!(g.edges(), &[Edge::new(1, 2, 0.5)]);
        assert!(SparseGraph::with_fake(3, vec![Edge::new(0, 2, 1.0)], vec![false, false, true]).is_err());
    }

    #[test]
    fn hop_distance_on_path() {
        let g = SparseGraph::new(4, vec![Edge::new(0, 1, 1.0), Edge::new(1, 2, 1.0)]).unwrap();
        assert_eq!(g.hop_distances(0), vec![Some(0), Some(1), Some(2), None]);
    }
}
