//! Five-layer graph convolutional classifier.
//!
//! Three Chebyshev convolution layers run on levels 0, 1 and 2 of a
//! [`CoarseningHierarchy`], each followed by a rectifier and stride-2 max
//! pooling, then two dense layers (rectifier and inverted dropout after the
//! first) and a softmax.
//!
//! Convolution coefficients are stored as a `(K·F_in) x F_out` matrix whose
//! row `k·F_in + f` holds `θ[k, f, :]`, so a layer is a single product of the
//! stacked Chebyshev terms `[T_0 x | T_1 x | ... | T_{K-1} x]` with `θ`.

use nalgebra::DMatrix;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use crate::coarsening::{permute_rows, pool_with_argmax, CoarseningHierarchy};
use crate::error::{dim, Error, Result};
use crate::laplacian::{rescaled_laplacian, LaplacianKind, LaplacianOp};
use crate::spectral::{chebyshev_adjoint, chebyshev_basis};

pub const CONV_LAYERS: usize = 3;
const POOL: usize = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NetworkConfig {
    /// Chebyshev order (number of coefficients per filter).
    pub k: usize,
    pub conv_channels: [usize; CONV_LAYERS],
    pub fc_width: usize,
    pub n_classes: usize,
    /// Probability of keeping an fc1 unit during training.
    pub dropout_keep: f64,
    pub laplacian_kind: LaplacianKind,
    pub seed: u64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig {
            k: 25,
            conv_channels: [32, 64, 128],
            fc_width: 128,
            n_classes: 2,
            dropout_keep: 0.5,
            laplacian_kind: LaplacianKind::Normalized,
            seed: 0,
        }
    }
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.k == 0 {
            return bad("K must be at least 1");
        }
        if self.conv_channels.contains(&0) || self.fc_width == 0 {
            return bad("channel and fc widths must be positive");
        }
        if self.n_classes < 2 {
            return bad("need at least 2 classes");
        }
        if !(self.dropout_keep > 0.0 && self.dropout_keep <= 1.0) {
            return bad("dropout keep probability must lie in (0, 1]");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamKind {
    Weight,
    Bias,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ConvLayer {
    theta: DMatrix<f64>,
    bias: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct DenseLayer {
    /// out x in
    weight: DMatrix<f64>,
    bias: DMatrix<f64>,
}

pub const MODEL_FORMAT: &str = "hgconv-chebnet";
pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChebNetModel {
    format: String,
    version: u32,
    config: NetworkConfig,
    hierarchy: CoarseningHierarchy,
    /// Rescaled Laplacian of each convolved level.
    laplacians: Vec<LaplacianOp>,
    conv: Vec<ConvLayer>,
    fc1: DenseLayer,
    fc2: DenseLayer,
    #[serde(skip)]
    generation: u64,
}

/// Intermediates of one training-mode forward pass, consumed by [`ChebNetModel::backward`].
#[derive(Debug, Clone)]
pub struct ForwardCache {
    generation: u64,
    samples: Vec<SampleCache>,
}

#[derive(Debug, Clone)]
struct SampleCache {
    /// Stacked Chebyshev terms per conv layer.
    stacked: Vec<DMatrix<f64>>,
    /// Pre-activation per conv layer.
    pre: Vec<DMatrix<f64>>,
    argmax: Vec<Vec<usize>>,
    flat: DMatrix<f64>,
    fc1_pre: DMatrix<f64>,
    mask: Vec<f64>,
    dropped: DMatrix<f64>,
    probs: Vec<f64>,
}

impl ForwardCache {
    pub fn batch_size(&self) -> usize {
        self.samples.len()
    }

    /// fc1 activations of sample `s` after dropout (already scaled by 1/keep).
    pub fn hidden(&self, s: usize) -> &[f64] {
        self.samples[s].dropped.as_slice()
    }
}

/// Gradient tensors in [`ChebNetModel::parameters`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub tensors: Vec<DMatrix<f64>>,
}

fn glorot(rows: usize, cols: usize, fan_in: usize, fan_out: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let dist = Uniform::new_inclusive(-limit, limit).expect("finite bounds");
    DMatrix::from_fn(rows, cols, |_, _| dist.sample(rng))
}

pub fn init_model(cfg: &NetworkConfig, h: CoarseningHierarchy) -> Result<ChebNetModel> {
    cfg.validate()?;
    if h.n_levels() < CONV_LAYERS {
        return Err(Error::Config(format!(
            "hierarchy has {} coarsening levels, the network pools {CONV_LAYERS} times",
            h.n_levels()
        )));
    }
    let laplacians = (0..CONV_LAYERS)
        .map(|l| rescaled_laplacian(h.level(l), cfg.laplacian_kind))
        .collect::<Result<Vec<_>>>()?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut conv = Vec::with_capacity(CONV_LAYERS);
    let mut f_in = 1;
    for &f_out in &cfg.conv_channels {
        conv.push(ConvLayer {
            theta: glorot(cfg.k * f_in, f_out, cfg.k * f_in, f_out, &mut rng),
            bias: DMatrix::zeros(f_out, 1),
        });
        f_in = f_out;
    }
    let flat = h.level(CONV_LAYERS).n() * cfg.conv_channels[CONV_LAYERS - 1];
    let fc1 = DenseLayer {
        weight: glorot(cfg.fc_width, flat, flat, cfg.fc_width, &mut rng),
        bias: DMatrix::zeros(cfg.fc_width, 1),
    };
    let fc2 = DenseLayer {
        weight: glorot(cfg.n_classes, cfg.fc_width, cfg.fc_width, cfg.n_classes, &mut rng),
        bias: DMatrix::zeros(cfg.n_classes, 1),
    };
    Ok(ChebNetModel {
        format: MODEL_FORMAT.to_string(),
        version: MODEL_VERSION,
        config: cfg.clone(),
        hierarchy: h,
        laplacians,
        conv,
        fc1,
        fc2,
        generation: 0,
    })
}

fn relu_inplace(m: &mut DMatrix<f64>) {
    m.iter_mut().for_each(|v| *v = v.max(0.0));
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exp: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exp.iter().sum();
    exp.into_iter().map(|e| e / sum).collect()
}

/// Row-wise argmax, ties resolved toward the lower index.
pub fn argmax_rows(probs: &DMatrix<f64>) -> Vec<usize> {
    probs
        .row_iter()
        .map(|row| {
            let mut best = 0;
            for (j, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect()
}

impl ChebNetModel {
    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    pub fn hierarchy(&self) -> &CoarseningHierarchy {
        &self.hierarchy
    }

    pub fn laplacians(&self) -> &[LaplacianOp] {
        &self.laplacians
    }

    pub fn n_inputs(&self) -> usize {
        self.hierarchy.n_real()
    }

    /// Named parameter tensors in a fixed order.
    pub fn parameters(&self) -> Vec<(String, ParamKind, &DMatrix<f64>)> {
        let mut out = Vec::with_capacity(2 * CONV_LAYERS + 4);
        for (l, c) in self.conv.iter().enumerate() {
            out.push((format!("conv{l}.theta"), ParamKind::Weight, &c.theta));
            out.push((format!("conv{l}.bias"), ParamKind::Bias, &c.bias));
        }
        out.push(("fc1.weight".into(), ParamKind::Weight, &self.fc1.weight));
        out.push(("fc1.bias".into(), ParamKind::Bias, &self.fc1.bias));
        out.push(("fc2.weight".into(), ParamKind::Weight, &self.fc2.weight));
        out.push(("fc2.bias".into(), ParamKind::Bias, &self.fc2.bias));
        out
    }

    /// Mutable parameter access; invalidates outstanding forward caches.
    pub fn parameters_mut(&mut self) -> Vec<(ParamKind, &mut DMatrix<f64>)> {
        self.generation += 1;
        let mut out = Vec::with_capacity(2 * CONV_LAYERS + 4);
        for c in &mut self.conv {
            out.push((ParamKind::Weight, &mut c.theta));
            out.push((ParamKind::Bias, &mut c.bias));
        }
        out.push((ParamKind::Weight, &mut self.fc1.weight));
        out.push((ParamKind::Bias, &mut self.fc1.bias));
        out.push((ParamKind::Weight, &mut self.fc2.weight));
        out.push((ParamKind::Bias, &mut self.fc2.bias));
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.parameters().iter().map(|(_, _, m)| m.len()).sum()
    }

    pub fn zero_gradients(&self) -> Gradients {
        Gradients {
            tensors: self
                .parameters()
                .iter()
                .map(|(_, _, m)| DMatrix::zeros(m.nrows(), m.ncols()))
                .collect(),
        }
    }

    fn check_batch(&self, x: &DMatrix<f64>) -> Result<()> {
        if x.nrows() != self.n_inputs() {
            return Err(dim(format!(
                "batch has {} node rows, model expects {}",
                x.nrows(),
                self.n_inputs()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation("batch contains non-finite values".into()));
        }
        Ok(())
    }

    /// Output of the three conv/pool stages for one sample, before flattening.
    /// Rows are in the padded, pooled layout of the coarsest level.
    pub fn conv_features(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if x.nrows() != self.hierarchy.level(0).n() {
            return Err(dim("conv_features expects a padded level-0 signal"));
        }
        if x.ncols() != 1 {
            return Err(dim(format!("conv_features takes one sample, got {} columns", x.ncols())));
        }
        let mut h = x.clone();
        for l in 0..CONV_LAYERS {
            let (stacked, mut pre) = self.conv_layer(l, &h)?;
            drop(stacked);
            relu_inplace(&mut pre);
            h = pool_with_argmax(&pre, POOL)?.0;
        }
        Ok(h)
    }

    fn conv_layer(&self, l: usize, h: &DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        let k = self.config.k;
        let f_in = h.ncols();
        let terms = chebyshev_basis(&self.laplacians[l], h, k)?;
        let mut stacked = DMatrix::zeros(h.nrows(), k * f_in);
        for (i, t) in terms.iter().enumerate() {
            stacked.columns_mut(i * f_in, f_in).copy_from(t);
        }
        let layer = &self.conv[l];
        let mut pre = &stacked * &layer.theta;
        for (j, mut col) in pre.column_iter_mut().enumerate() {
            col.add_scalar_mut(layer.bias[(j, 0)]);
        }
        Ok((stacked, pre))
    }

    fn forward_sample(&self, x: &DMatrix<f64>, mask: Option<Vec<f64>>) -> Result<SampleCache> {
        let mut h = x.clone();
        let mut stacked_all = Vec::with_capacity(CONV_LAYERS);
        let mut pre_all = Vec::with_capacity(CONV_LAYERS);
        let mut argmax_all = Vec::with_capacity(CONV_LAYERS);
        for l in 0..CONV_LAYERS {
            let (stacked, pre) = self.conv_layer(l, &h)?;
            let mut act = pre.clone();
            relu_inplace(&mut act);
            let (pooled, argmax) = pool_with_argmax(&act, POOL)?;
            stacked_all.push(stacked);
            pre_all.push(pre);
            argmax_all.push(argmax);
            h = pooled;
        }
        // node-major flattening: index = node * F + channel
        let flat = DMatrix::from_iterator(h.len(), 1, h.transpose().iter().copied());
        let fc1_pre = &self.fc1.weight * &flat + &self.fc1.bias;
        let mut dropped = fc1_pre.map(|v| v.max(0.0));
        let mask = mask.unwrap_or_default();
        if !mask.is_empty() {
            dropped.iter_mut().zip(&mask).for_each(|(v, m)| *v *= m);
        }
        let logits = &self.fc2.weight * &dropped + &self.fc2.bias;
        let probs = softmax(logits.as_slice());
        Ok(SampleCache {
            stacked: stacked_all,
            pre: pre_all,
            argmax: argmax_all,
            flat,
            fc1_pre,
            mask,
            dropped,
            probs,
        })
    }

    /// Class probabilities in inference mode (no dropout). `x` holds one
    /// sample per column with one row per real node.
    pub fn forward(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.check_batch(x)?;
        let padded = permute_rows(x, &self.hierarchy)?;
        let mut probs = DMatrix::zeros(x.ncols(), self.config.n_classes);
        for s in 0..x.ncols() {
            let col = padded.columns(s, 1).into_owned();
            let cache = self.forward_sample(&col, None)?;
            probs.row_mut(s).copy_from_slice(&cache.probs);
        }
        Ok(probs)
    }

    /// Inference-mode fc1 activations, one row per sample.
    pub fn hidden(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.check_batch(x)?;
        let padded = permute_rows(x, &self.hierarchy)?;
        let mut out = DMatrix::zeros(x.ncols(), self.config.fc_width);
        for s in 0..x.ncols() {
            let cache = self.forward_sample(&padded.columns(s, 1).into_owned(), None)?;
            out.row_mut(s).copy_from_slice(cache.dropped.as_slice());
        }
        Ok(out)
    }

    /// Training-mode forward pass: dropout masks are drawn from `rng` and
    /// everything needed for [`backward`](Self::backward) is kept.
    pub fn forward_train<R: Rng + ?Sized>(
        &self,
        x: &DMatrix<f64>,
        rng: &mut R,
    ) -> Result<(DMatrix<f64>, ForwardCache)> {
        self.check_batch(x)?;
        let padded = permute_rows(x, &self.hierarchy)?;
        let keep = self.config.dropout_keep;
        let mut probs = DMatrix::zeros(x.ncols(), self.config.n_classes);
        let mut samples = Vec::with_capacity(x.ncols());
        for s in 0..x.ncols() {
            let mask = if keep < 1.0 {
                (0..self.config.fc_width)
                    .map(|_| if rng.random::<f64>() < keep { 1.0 / keep } else { 0.0 })
                    .collect()
            } else {
                Vec::new()
            };
            let col = padded.columns(s, 1).into_owned();
            let cache = self.forward_sample(&col, Some(mask))?;
            probs.row_mut(s).copy_from_slice(&cache.probs);
            samples.push(cache);
        }
        Ok((
            probs,
            ForwardCache {
                generation: self.generation,
                samples,
            },
        ))
    }

    /// Exact gradients of the batch-mean cross-entropy.
    pub fn backward(&self, cache: &ForwardCache, labels: &[usize]) -> Result<Gradients> {
        if cache.generation != self.generation {
            return Err(Error::Contract("forward cache is stale: parameters changed since it was built".into()));
        }
        if labels.len() != cache.samples.len() {
            return Err(dim(format!(
                "{} labels for a batch of {}",
                labels.len(),
                cache.samples.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= self.config.n_classes) {
            return Err(Error::Validation(format!("label {bad} out of range")));
        }
        let mut grads = self.zero_gradients();
        let batch = cache.samples.len() as f64;
        let n_conv = 2 * CONV_LAYERS;

        for (sample, &label) in cache.samples.iter().zip(labels) {
            let mut d_logits = DMatrix::from_column_slice(sample.probs.len(), 1, &sample.probs);
            d_logits[(label, 0)] -= 1.0;
            d_logits /= batch;

            grads.tensors[n_conv + 2] += &d_logits * sample.dropped.transpose();
            grads.tensors[n_conv + 3] += &d_logits;

            let mut d_hidden = self.fc2.weight.tr_mul(&d_logits);
            for (i, d) in d_hidden.iter_mut().enumerate() {
                let m = sample.mask.get(i).copied().unwrap_or(1.0);
                *d = if sample.fc1_pre[(i, 0)] > 0.0 { *d * m } else { 0.0 };
            }
            grads.tensors[n_conv] += &d_hidden * sample.flat.transpose();
            grads.tensors[n_conv + 1] += &d_hidden;

            let d_flat = self.fc1.weight.tr_mul(&d_hidden);
            let top = CONV_LAYERS - 1;
            let f_top = self.conv[top].theta.ncols();
            let nodes_top = d_flat.len() / f_top;
            let mut d_pooled = DMatrix::from_row_slice(nodes_top, f_top, d_flat.as_slice());

            for l in (0..CONV_LAYERS).rev() {
                let pre = &sample.pre[l];
                let rows = d_pooled.nrows();
                let mut d_pre = DMatrix::zeros(pre.nrows(), pre.ncols());
                for c in 0..pre.ncols() {
                    for r in 0..rows {
                        let src = sample.argmax[l][c * rows + r];
                        if pre[(src, c)] > 0.0 {
                            d_pre[(src, c)] += d_pooled[(r, c)];
                        }
                    }
                }
                grads.tensors[2 * l] += sample.stacked[l].tr_mul(&d_pre);
                for (j, col) in d_pre.column_iter().enumerate() {
                    grads.tensors[2 * l + 1][(j, 0)] += col.sum();
                }
                if l == 0 {
                    break;
                }
                let d_stacked = &d_pre * self.conv[l].theta.transpose();
                let f_in = self.conv[l].theta.nrows() / self.config.k;
                let blocks: Vec<DMatrix<f64>> = (0..self.config.k)
                    .map(|k| d_stacked.columns(k * f_in, f_in).into_owned())
                    .collect();
                d_pooled = chebyshev_adjoint(&self.laplacians[l], &blocks)?;
            }
        }
        Ok(grads)
    }

    /// Class index per sample, inference mode.
    pub fn predict(&self, x: &DMatrix<f64>) -> Result<Vec<usize>> {
        Ok(argmax_rows(&self.forward(x)?))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let model: ChebNetModel = serde_json::from_str(s)?;
        if model.format != MODEL_FORMAT || model.version != MODEL_VERSION {
            return Err(Error::Validation(format!(
                "unsupported model file {} v{}",
                model.format, model.version
            )));
        }
        model.config.validate()?;
        Ok(model)
    }
}
