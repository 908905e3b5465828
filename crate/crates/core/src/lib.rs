//! Graph signal processing and hierarchical Chebyshev graph convolution.
//!
//! The pipeline: a node-by-subject [`SignalMatrix`] is reduced to a
//! correlation graph ([`pearson_correlation`], [`infer_graph`]), the graph is
//! coarsened into a pooling pyramid ([`build_hierarchy`]), and a
//! [`ChebNetModel`] with three Chebyshev convolution layers and two dense
//! layers is trained on it ([`train`], [`cross_validate`]).

pub mod benchmark;
pub mod coarsening;
pub mod error;
pub mod graph;
pub mod io;
pub mod laplacian;
pub mod manifest;
pub mod network;
pub mod sparse;
pub mod spectral;
pub mod synthetic;
pub mod training;

pub use coarsening::{
    build_hierarchy, coarsen_once, heavy_edge_matching, heavy_edge_matching_in_order, permute_signal, pool,
    unpermute_signal, CoarseningHierarchy, HierarchyMetadata, Matching,
};
pub use error::{Error, Result};
pub use graph::{infer_graph, pearson_correlation, CorrMatrix, Edge, SignalMatrix, SparseGraph};
pub use laplacian::{
    estimate_lambda_max, laplacian, rescale, rescaled_laplacian, LambdaEstimate, LaplacianKind, LaplacianOp,
};
pub use manifest::RunManifest;
pub use network::{argmax_rows, init_model, ChebNetModel, ForwardCache, Gradients, NetworkConfig, ParamKind};
pub use sparse::CsrMatrix;
pub use spectral::{
    chebyshev_filter, chebyshev_from_monomial, exact_spectral_filter, monomial_from_chebyshev, Basis,
    FilterCoefficients, FourierBasis, NodeSignal,
};
pub use synthetic::{edge_recovery, generate_synthetic, RecoveryStats, SyntheticSpec};
pub use training::{
    baseline_graph, cross_entropy_loss, cross_validate, cross_validate_with, optimizer_step, train,
    train_with_holdout, BaselineKind, CurvePoint, CvConfig, Dataset, ExperimentReport, GraphSource,
    OptimizerKind, OptimizerState, RunContext, RunOutcome, RunRecord, TrainConfig,
};
