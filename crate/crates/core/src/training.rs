//! Loss, optimizers, the training loop and the repeated stratified
//! cross-validation protocol with its graph ablations.

use std::collections::BTreeSet;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coarsening::build_hierarchy;
use crate::error::{dim, invalid, Error, Result};
use crate::graph::{infer_graph, pearson_correlation, Edge, SignalMatrix, SparseGraph};
use crate::network::{init_model, ChebNetModel, Gradients, NetworkConfig, ParamKind, CONV_LAYERS};

/// Probabilities below this are clamped before taking the log.
pub const PROB_FLOOR: f64 = 1e-12;

/// Mean of `-ln p[label]` over the rows of `probs`.
pub fn cross_entropy_loss(probs: &DMatrix<f64>, labels: &[usize]) -> Result<f64> {
    if probs.nrows() != labels.len() {
        return Err(dim(format!("{} probability rows for {} labels", probs.nrows(), labels.len())));
    }
    if labels.is_empty() {
        return Err(invalid("loss of an empty batch"));
    }
    let mut total = 0.0;
    for (i, &y) in labels.iter().enumerate() {
        if y >= probs.ncols() {
            return Err(invalid(format!("label {y} out of range for {} classes", probs.ncols())));
        }
        total -= probs[(i, y)].max(PROB_FLOOR).ln();
    }
    Ok(total / labels.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    #[default]
    Adam,
    SgdMomentum,
}

impl std::str::FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "adam" => Ok(OptimizerKind::Adam),
            "sgd_momentum" | "sgd" => Ok(OptimizerKind::SgdMomentum),
            other => Err(invalid(format!("unknown optimizer '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub optimizer: OptimizerKind,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 200,
            batch_size: 32,
            learning_rate: 1e-3,
            weight_decay: 5e-4,
            optimizer: OptimizerKind::Adam,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be positive".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::Config("weight decay must be non-negative".into()));
        }
        Ok(())
    }
}

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;
pub const SGD_MOMENTUM: f64 = 0.9;

/// First/second moment buffers, lazily shaped on the first step.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct OptimizerState {
    pub step: u64,
    first: Vec<DMatrix<f64>>,
    second: Vec<DMatrix<f64>>,
}

/// One update of every parameter tensor. Weight decay is decoupled from the
/// gradient and skips biases.
pub fn optimizer_step(
    params: &mut [(ParamKind, &mut DMatrix<f64>)],
    grads: &Gradients,
    state: &mut OptimizerState,
    cfg: &TrainConfig,
) -> Result<()> {
    if params.len() != grads.tensors.len() {
        return Err(dim(format!("{} parameters but {} gradients", params.len(), grads.tensors.len())));
    }
    for ((_, p), g) in params.iter().zip(&grads.tensors) {
        if p.shape() != g.shape() {
            return Err(dim(format!("parameter {:?} vs gradient {:?}", p.shape(), g.shape())));
        }
    }
    if state.first.is_empty() {
        state.first = grads.tensors.iter().map(|g| DMatrix::zeros(g.nrows(), g.ncols())).collect();
        state.second = state.first.clone();
    }
    state.step += 1;
    let lr = cfg.learning_rate;
    let t = state.step as i32;
    let bc1 = 1.0 - ADAM_BETA1.powi(t);
    let bc2 = 1.0 - ADAM_BETA2.powi(t);

    for (i, (kind, p)) in params.iter_mut().enumerate() {
        let decay = if *kind == ParamKind::Weight { lr * cfg.weight_decay } else { 0.0 };
        let g = &grads.tensors[i];
        let m = &mut state.first[i];
        match cfg.optimizer {
            OptimizerKind::Adam => {
                let v = &mut state.second[i];
                for j in 0..g.len() {
                    m[j] = ADAM_BETA1 * m[j] + (1.0 - ADAM_BETA1) * g[j];
                    v[j] = ADAM_BETA2 * v[j] + (1.0 - ADAM_BETA2) * g[j] * g[j];
                    let m_hat = m[j] / bc1;
                    let v_hat = v[j] / bc2;
                    p[j] -= decay * p[j] + lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
                }
            }
            OptimizerKind::SgdMomentum => {
                for j in 0..g.len() {
                    m[j] = SGD_MOMENTUM * m[j] + g[j];
                    p[j] -= decay * p[j] + lr * m[j];
                }
            }
        }
    }
    Ok(())
}

/// Signals with one class label per subject column.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    signals: SignalMatrix,
    labels: Vec<usize>,
    class_names: Vec<String>,
}

impl Dataset {
    pub fn new(signals: SignalMatrix, labels: Vec<usize>, class_names: Vec<String>) -> Result<Self> {
        if labels.len() != signals.n_subjects() {
            return Err(dim(format!(
                "{} labels for {} subjects",
                labels.len(),
                signals.n_subjects()
            )));
        }
        if class_names.len() < 2 {
            return Err(invalid("a dataset needs at least 2 classes"));
        }
        if let Some(&y) = labels.iter().find(|&&y| y >= class_names.len()) {
            return Err(invalid(format!("label {y} has no class name")));
        }
        for (c, name) in class_names.iter().enumerate() {
            if !labels.contains(&c) {
                return Err(invalid(format!("class '{name}' has no subjects")));
            }
        }
        Ok(Dataset {
            signals,
            labels,
            class_names,
        })
    }

    pub fn signals(&self) -> &SignalMatrix {
        &self.signals
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn n_subjects(&self) -> usize {
        self.labels.len()
    }

    pub fn n_nodes(&self) -> usize {
        self.signals.n_nodes()
    }

    /// Subjects at `indices`. Classes may end up empty, so this skips the
    /// non-empty-class check of [`Dataset::new`].
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            signals: self.signals.select_subjects(indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            class_names: self.class_names.clone(),
        }
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_classes()];
        for &y in &self.labels {
            counts[y] += 1;
        }
        counts
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    pub val_acc: Option<f64>,
}

pub fn accuracy(predicted: &[usize], labels: &[usize]) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    let hits = predicted.iter().zip(labels).filter(|(a, b)| a == b).count();
    hits as f64 / labels.len() as f64
}

/// `confusion[true][predicted]` counts.
pub fn confusion_matrix(predicted: &[usize], labels: &[usize], n_classes: usize) -> Vec<Vec<usize>> {
    let mut m = vec![vec![0; n_classes]; n_classes];
    for (&p, &y) in predicted.iter().zip(labels) {
        m[y][p] += 1;
    }
    m
}

pub fn train(
    ds: &Dataset,
    g: &SparseGraph,
    ncfg: &NetworkConfig,
    tcfg: &TrainConfig,
) -> Result<(ChebNetModel, Vec<CurvePoint>)> {
    train_with_holdout(ds, g, ncfg, tcfg, None)
}

/// Builds the pooling hierarchy for `g`, initializes a model and runs seeded
/// mini-batch epochs. Each curve point records the mean training-batch loss
/// and the inference-mode accuracy on the training set (and on `holdout`).
pub fn train_with_holdout(
    ds: &Dataset,
    g: &SparseGraph,
    ncfg: &NetworkConfig,
    tcfg: &TrainConfig,
    holdout: Option<&Dataset>,
) -> Result<(ChebNetModel, Vec<CurvePoint>)> {
    tcfg.validate()?;
    if g.n() != ds.n_nodes() {
        return Err(dim(format!("graph has {} nodes, dataset has {}", g.n(), ds.n_nodes())));
    }
    if ncfg.n_classes != ds.n_classes() {
        return Err(Error::Config(format!(
            "network has {} outputs, dataset has {} classes",
            ncfg.n_classes,
            ds.n_classes()
        )));
    }
    if let Some(h) = holdout {
        if h.n_nodes() != ds.n_nodes() {
            return Err(dim("holdout node count differs from training set"));
        }
    }
    let hierarchy = build_hierarchy(g, CONV_LAYERS, ncfg.seed)?;
    let mut model = init_model(ncfg, hierarchy)?;
    let mut state = OptimizerState::default();
    let mut rng = ChaCha8Rng::seed_from_u64(tcfg.seed);
    let x = ds.signals().values();
    let mut order: Vec<usize> = (0..ds.n_subjects()).collect();
    let mut curve = Vec::with_capacity(tcfg.epochs);

    for epoch in 0..tcfg.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for chunk in order.chunks(tcfg.batch_size) {
            let xb = x.select_columns(chunk);
            let yb: Vec<usize> = chunk.iter().map(|&i| ds.labels()[i]).collect();
            let (probs, cache) = model.forward_train(&xb, &mut rng)?;
            let loss = cross_entropy_loss(&probs, &yb)?;
            if !loss.is_finite() {
                return Err(Error::Diverged { epoch, loss });
            }
            loss_sum += loss * chunk.len() as f64;
            let grads = model.backward(&cache, &yb)?;
            if grads.tensors.iter().any(|t| t.iter().any(|v| !v.is_finite())) {
                return Err(Error::Diverged { epoch, loss: f64::NAN });
            }
            optimizer_step(&mut model.parameters_mut(), &grads, &mut state, tcfg)?;
        }
        let train_acc = accuracy(&model.predict(x)?, ds.labels());
        let val_acc = match holdout {
            Some(h) => Some(accuracy(&model.predict(h.signals().values())?, h.labels())),
            None => None,
        };
        curve.push(CurvePoint {
            epoch,
            train_loss: loss_sum / ds.n_subjects() as f64,
            train_acc,
            val_acc,
        });
    }
    Ok((model, curve))
}

/// Random fold index per subject with per-class round-robin, so each class
/// is split across folds as evenly as possible.
pub fn stratified_folds<R: Rng + ?Sized>(
    labels: &[usize],
    n_classes: usize,
    folds: usize,
    rng: &mut R,
) -> Result<Vec<usize>> {
    if folds < 2 {
        return Err(Error::Config("need at least 2 folds".into()));
    }
    let mut assignment = vec![0usize; labels.len()];
    let mut offset = 0;
    for c in 0..n_classes {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
        if members.len() < folds {
            return Err(Error::Config(format!(
                "class {c} has {} subjects, fewer than {folds} folds",
                members.len()
            )));
        }
        members.shuffle(rng);
        for (pos, &i) in members.iter().enumerate() {
            assignment[i] = (pos + offset) % folds;
        }
        // rotate the starting fold so remainders do not all land in fold 0
        offset = (offset + members.len()) % folds;
    }
    Ok(assignment)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineKind {
    Empty,
    Random,
}

/// Ablation graphs: no edges at all, or `n_edges` uniformly drawn distinct
/// pairs with weights uniform in (0, 1].
pub fn baseline_graph(kind: BaselineKind, n: usize, n_edges: usize, seed: u64) -> Result<SparseGraph> {
    match kind {
        BaselineKind::Empty => Ok(SparseGraph::empty(n)),
        BaselineKind::Random => {
            let max = n * n.saturating_sub(1) / 2;
            if n_edges > max {
                return Err(invalid(format!("{n_edges} edges requested, a {n}-node graph has at most {max}")));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut chosen = BTreeSet::new();
            // Rejection sampling is fine while sparse; enumerate otherwise.
            if n_edges * 2 <= max {
                while chosen.len() < n_edges {
                    let a = rng.random_range(0..n);
                    let b = rng.random_range(0..n);
                    if a != b {
                        chosen.insert((a.min(b), a.max(b)));
                    }
                }
            } else {
                let mut all: Vec<(usize, usize)> =
                    (0..n).flat_map(|a| ((a + 1)..n).map(move |b| (a, b))).collect();
                all.shuffle(&mut rng);
                chosen.extend(all.into_iter().take(n_edges));
            }
            let edges = chosen
                .into_iter()
                .map(|(a, b)| Edge::new(a, b, 1.0 - rng.random::<f64>()))
                .collect();
            SparseGraph::new(n, edges)
        }
    }
}

/// Where the graph of each cross-validation run comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum GraphSource {
    /// Correlation graph of the training fold.
    Inferred { threshold: f64 },
    /// Ablation: no edges.
    Empty,
    /// Ablation: as many random edges as the training-fold correlation graph has.
    Random { threshold: f64 },
    /// A fixed graph for every run.
    Fixed { graph: SparseGraph },
}

impl GraphSource {
    pub fn name(&self) -> &'static str {
        match self {
            GraphSource::Inferred { .. } => "inferred",
            GraphSource::Empty => "empty",
            GraphSource::Random { .. } => "random",
            GraphSource::Fixed { .. } => "fixed",
        }
    }

    /// Graph for one run, built from the training subjects only.
    pub fn graph_for(&self, train: &SignalMatrix, seed: u64) -> Result<SparseGraph> {
        match self {
            GraphSource::Inferred { threshold } => infer_graph(&pearson_correlation(train)?, *threshold),
            GraphSource::Empty => baseline_graph(BaselineKind::Empty, train.n_nodes(), 0, seed),
            GraphSource::Random { threshold } => {
                let inferred = infer_graph(&pearson_correlation(train)?, *threshold)?;
                baseline_graph(BaselineKind::Random, train.n_nodes(), inferred.n_edges(), seed)
            }
            GraphSource::Fixed { graph } => {
                if graph.n() != train.n_nodes() {
                    return Err(dim(format!("graph has {} nodes, signals have {}", graph.n(), train.n_nodes())));
                }
                Ok(graph.clone())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvConfig {
    pub folds: usize,
    pub repeats: usize,
    pub seed: u64,
    pub graph: GraphSource,
    /// Worker threads; 0 lets the runtime decide.
    pub jobs: usize,
}

impl Default for CvConfig {
    fn default() -> Self {
        CvConfig {
            folds: 5,
            repeats: 10,
            seed: 0,
            graph: GraphSource::Inferred { threshold: 0.7 },
            jobs: 1,
        }
    }
}

/// Everything one cross-validation run sees.
#[derive(Debug, Clone)]
pub struct RunContext<'a> {
    pub repeat: usize,
    pub fold: usize,
    pub seed: u64,
    pub train: Dataset,
    pub test: Dataset,
    pub full: &'a Dataset,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub predictions: Vec<usize>,
    pub n_edges: usize,
    pub curve: Vec<CurvePoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub repeat: usize,
    pub fold: usize,
    pub seed: u64,
    pub accuracy: f64,
    /// `confusion[true][predicted]`
    pub confusion: Vec<Vec<usize>>,
    pub n_edges: usize,
    pub test_indices: Vec<usize>,
    pub curve: Vec<CurvePoint>,
}

pub const REPORT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub version: u32,
    pub graph_mode: String,
    pub class_names: Vec<String>,
    pub folds: usize,
    pub repeats: usize,
    pub seed: u64,
    pub runs: Vec<RunRecord>,
    /// Unweighted mean of the per-run accuracies.
    pub mean_accuracy: f64,
    /// Sample standard deviation of the per-run accuracies.
    pub std_accuracy: f64,
}

impl ExperimentReport {
    pub fn accuracies(&self) -> Vec<f64> {
        self.runs.iter().map(|r| r.accuracy).collect()
    }
}

/// SplitMix64 finalizer over a running hash of `parts`.
pub fn derive_seed(master: u64, parts: &[u64]) -> u64 {
    let mut z = master;
    for &p in parts {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15).wrapping_add(p);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^= z >> 31;
    }
    z
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Repeated stratified k-fold driver with a pluggable per-run model.
///
/// Runs may execute on `jobs` threads; results are keyed by (repeat, fold)
/// so the report does not depend on scheduling.
pub fn cross_validate_with<F>(
    ds: &Dataset,
    folds: usize,
    repeats: usize,
    seed: u64,
    jobs: usize,
    graph_mode: &str,
    run: F,
) -> Result<ExperimentReport>
where
    F: Fn(&RunContext) -> Result<RunOutcome> + Sync,
{
    if repeats == 0 {
        return Err(Error::Config("need at least one repeat".into()));
    }
    let mut plans = Vec::with_capacity(folds * repeats);
    for r in 0..repeats {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[r as u64]));
        let assignment = stratified_folds(ds.labels(), ds.n_classes(), folds, &mut rng)?;
        for f in 0..folds {
            let test: Vec<usize> = (0..ds.n_subjects()).filter(|&i| assignment[i] == f).collect();
            let train: Vec<usize> = (0..ds.n_subjects()).filter(|&i| assignment[i] != f).collect();
            plans.push((r, f, train, test));
        }
    }

    let exec = |(r, f, train, test): &(usize, usize, Vec<usize>, Vec<usize>)| -> Result<RunRecord> {
        let ctx = RunContext {
            repeat: *r,
            fold: *f,
            seed: derive_seed(seed, &[*r as u64, *f as u64, 1]),
            train: ds.subset(train),
            test: ds.subset(test),
            full: ds,
        };
        let outcome = run(&ctx)?;
        if outcome.predictions.len() != test.len() {
            return Err(dim("run returned the wrong number of predictions"));
        }
        Ok(RunRecord {
            repeat: *r,
            fold: *f,
            seed: ctx.seed,
            accuracy: accuracy(&outcome.predictions, ctx.test.labels()),
            confusion: confusion_matrix(&outcome.predictions, ctx.test.labels(), ds.n_classes()),
            n_edges: outcome.n_edges,
            test_indices: test.clone(),
            curve: outcome.curve,
        })
    };

    let runs: Vec<RunRecord> = if jobs == 1 {
        plans.iter().map(exec).collect::<Result<_>>()?
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
        pool.install(|| plans.par_iter().map(exec).collect::<Result<_>>())?
    };

    let (mean, std) = mean_std(&runs.iter().map(|r| r.accuracy).collect::<Vec<_>>());
    Ok(ExperimentReport {
        version: REPORT_VERSION,
        graph_mode: graph_mode.to_string(),
        class_names: ds.class_names().to_vec(),
        folds,
        repeats,
        seed,
        runs,
        mean_accuracy: mean,
        std_accuracy: std,
    })
}

/// Cross-validates the graph convolutional classifier. Each run infers (or
/// draws) its graph from the training fold alone, trains a fresh model and
/// scores the held-out fold; learning curves track held-out accuracy.
pub fn cross_validate(ds: &Dataset, ncfg: &NetworkConfig, tcfg: &TrainConfig, cv: &CvConfig) -> Result<ExperimentReport> {
    ncfg.validate()?;
    tcfg.validate()?;
    cross_validate_with(ds, cv.folds, cv.repeats, cv.seed, cv.jobs, cv.graph.name(), |ctx| {
        let graph = cv.graph.graph_for(ctx.train.signals(), derive_seed(ctx.seed, &[2]))?;
        let ncfg = NetworkConfig {
            n_classes: ds.n_classes(),
            seed: derive_seed(ctx.seed, &[3]),
            ..ncfg.clone()
        };
        let tcfg = TrainConfig {
            seed: derive_seed(ctx.seed, &[4]),
            ..tcfg.clone()
        };
        let (model, curve) = train_with_holdout(&ctx.train, &graph, &ncfg, &tcfg, Some(&ctx.test))?;
        Ok(RunOutcome {
            predictions: model.predict(ctx.test.signals().values())?,
            n_edges: graph.n_edges(),
            curve,
        })
    })
}
