//! A small fully connected network with batch normalization.
//!
//! Batch-norm layers normalize with statistics chosen by an [`EvalMode`]:
//! the current batch (as during training), the stored source statistics, or
//! source statistics combined with adapted target statistics.

mod adapt;
mod backward;
mod checkpoint;
mod gradcheck;
mod train;

use ndarray::{Array1, Array2, ArrayView2, Axis};

use crate::error::{invalid, Error, Result};
use crate::rng::CounterRng;
use crate::stats::{combine_stats, estimate_stats, CombineConfig, FeatureStats};

pub use adapt::Stage;
pub use backward::{softmax_cross_entropy, Gradients, LayerGradient};
pub use checkpoint::CHECKPOINT_VERSION;
pub use gradcheck::{GradCheckReport, GRADCHECK_STEP};
pub use train::{EpochLog, TrainSchedule};

pub const DEFAULT_EPS: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    /// `out x in`
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm {
    pub source: FeatureStats,
    pub gamma: Array1<f64>,
    pub beta: Array1<f64>,
    pub eps: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    Dense(Dense),
    BatchNorm(BatchNorm),
    Relu,
}

/// Which statistics the batch-norm layers normalize with.
#[derive(Debug, Clone, PartialEq)]
pub enum EvalMode {
    /// Statistics of the batch being processed.
    TrainStats,
    /// Stored source statistics.
    SourceStats,
    /// One target estimate per batch-norm layer, combined with the source
    /// statistics through `combine`.
    AdaptedStats {
        target_stats: Vec<FeatureStats>,
        combine: CombineConfig,
    },
}

/// Normalization policy used internally by the forward pass.
#[derive(Debug, Clone, Copy)]
pub(crate) enum Norm<'a> {
    Batch,
    Source,
    Adapted(&'a [FeatureStats], CombineConfig),
    /// Per-batch combination with a prior of `pseudo` source samples;
    /// `target_count` overrides the batch size as the weight of the batch.
    Prior {
        pseudo: f64,
        target_count: Option<usize>,
    },
}

impl<'a> From<&'a EvalMode> for Norm<'a> {
    fn from(mode: &'a EvalMode) -> Self {
        match mode {
            EvalMode::TrainStats => Norm::Batch,
            EvalMode::SourceStats => Norm::Source,
            EvalMode::AdaptedStats {
                target_stats,
                combine,
            } => Norm::Adapted(target_stats, *combine),
        }
    }
}

/// Intermediate values kept for the backward pass.
#[derive(Debug, Clone)]
pub(crate) enum LayerCache {
    Dense {
        input: Array2<f64>,
    },
    BatchNorm {
        normalized: Array2<f64>,
        inv_std: Array1<f64>,
    },
    Relu {
        mask: Array2<bool>,
    },
}

#[derive(Debug, Default)]
pub(crate) struct Trace {
    pub keep_cache: bool,
    pub record_inputs: bool,
    pub caches: Vec<LayerCache>,
    /// Statistics of each batch-norm layer's input for the processed batch.
    pub bn_inputs: Vec<FeatureStats>,
    /// Statistics each batch-norm layer normalized with.
    pub bn_used: Vec<FeatureStats>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    layers: Vec<Layer>,
    classes: usize,
}

impl Network {
    pub fn new(layers: Vec<Layer>, classes: usize) -> Result<Self> {
        let net = Self { layers, classes };
        net.validate()?;
        Ok(net)
    }

    fn validate(&self) -> Result<()> {
        if self.classes < 2 {
            return Err(Error::InvalidNetwork("need at least two classes".into()));
        }
        let mut dim: Option<usize> = None;
        for (i, layer) in self.layers.iter().enumerate() {
            match layer {
                Layer::Dense(d) => {
                    if d.weights.nrows() != d.bias.len() || d.weights.ncols() == 0 {
                        return Err(Error::InvalidNetwork(format!(
                            "layer {i}: malformed dense layer"
                        )));
                    }
                    if let Some(k) = dim {
                        if k != d.weights.ncols() {
                            return Err(Error::InvalidNetwork(format!(
                                "layer {i}: expects {} inputs, previous layer gives {k}",
                                d.weights.ncols()
                            )));
                        }
                    }
                    dim = Some(d.weights.nrows());
                }
                Layer::BatchNorm(bn) => {
                    let k = bn.gamma.len();
                    if bn.beta.len() != k || bn.source.dim() != k {
                        return Err(Error::InvalidNetwork(format!(
                            "layer {i}: malformed batch norm"
                        )));
                    }
                    if dim.is_some_and(|d| d != k) {
                        return Err(Error::InvalidNetwork(format!(
                            "layer {i}: dimension mismatch"
                        )));
                    }
                    if bn.eps.is_nan() || bn.eps <= 0.0 {
                        return Err(Error::InvalidNetwork(format!("layer {i}: eps must be > 0")));
                    }
                    dim = Some(k);
                }
                Layer::Relu => {}
            }
        }
        match dim {
            Some(d) if d == self.classes => Ok(()),
            Some(d) => Err(Error::InvalidNetwork(format!(
                "network outputs {d} values for {} classes",
                self.classes
            ))),
            None => Err(Error::InvalidNetwork(
                "network has no dense or batch-norm layer".into(),
            )),
        }
    }

    /// `input -> [Dense(h) -> BN -> ReLU]* -> Dense(classes)` with He-uniform
    /// weights, zero biases, `gamma = 1`, `beta = 0` and empty source stats.
    pub fn mlp(input_dim: usize, hidden: &[usize], classes: usize, seed: u64) -> Result<Self> {
        if input_dim == 0 || hidden.contains(&0) {
            return Err(invalid("layer widths must be positive"));
        }
        let mut rng = CounterRng::stream(seed, 0x1417);
        let mut layers = Vec::new();
        let mut fan_in = input_dim;
        for &width in hidden {
            layers.push(Layer::Dense(he_uniform(&mut rng, width, fan_in)));
            layers.push(Layer::BatchNorm(BatchNorm {
                source: FeatureStats::empty(width),
                gamma: Array1::ones(width),
                beta: Array1::zeros(width),
                eps: DEFAULT_EPS,
            }));
            layers.push(Layer::Relu);
            fan_in = width;
        }
        layers.push(Layer::Dense(he_uniform(&mut rng, classes, fan_in)));
        Self::new(layers, classes)
    }

    /// Default experiment architecture: two hidden layers of 32 units.
    pub fn default_mlp(input_dim: usize, classes: usize, seed: u64) -> Result<Self> {
        Self::mlp(input_dim, &[32, 32], classes, seed)
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub(crate) fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn input_dim(&self) -> usize {
        match self.layers.iter().find(|l| !matches!(l, Layer::Relu)) {
            Some(Layer::Dense(d)) => d.weights.ncols(),
            Some(Layer::BatchNorm(bn)) => bn.gamma.len(),
            _ => 0,
        }
    }

    /// Layer indices of the batch-norm layers, in order.
    pub fn bn_indices(&self) -> Vec<usize> {
        self.layers
            .iter()
            .enumerate()
            .filter(|(_, l)| matches!(l, Layer::BatchNorm(_)))
            .map(|(i, _)| i)
            .collect()
    }

    pub fn bn_count(&self) -> usize {
        self.bn_indices().len()
    }

    /// Stored source statistics of every batch-norm layer.
    pub fn source_stats(&self) -> Vec<FeatureStats> {
        self.layers
            .iter()
            .filter_map(|l| match l {
                Layer::BatchNorm(bn) => Some(bn.source.clone()),
                _ => None,
            })
            .collect()
    }

    /// Replaces the stored statistics, one entry per batch-norm layer.
    pub fn set_source_stats(&mut self, stats: Vec<FeatureStats>) -> Result<()> {
        if stats.len() != self.bn_count() {
            return Err(Error::DimensionMismatch {
                expected: self.bn_count(),
                found: stats.len(),
            });
        }
        let mut it = stats.into_iter();
        for layer in &mut self.layers {
            if let Layer::BatchNorm(bn) = layer {
                let s = it.next().expect("length checked");
                if s.dim() != bn.gamma.len() {
                    return Err(Error::DimensionMismatch {
                        expected: bn.gamma.len(),
                        found: s.dim(),
                    });
                }
                bn.source = s;
            }
        }
        Ok(())
    }

    /// Logits for `batch` (samples x features).
    pub fn forward(&self, batch: ArrayView2<'_, f64>, mode: &EvalMode) -> Result<Array2<f64>> {
        if let EvalMode::AdaptedStats { target_stats, .. } = mode {
            if target_stats.len() != self.bn_count() {
                return Err(Error::DimensionMismatch {
                    expected: self.bn_count(),
                    found: target_stats.len(),
                });
            }
        }
        self.run(batch, Norm::from(mode), &mut Trace::default())
    }

    /// Per-batch combination of the source statistics with the batch's own
    /// statistics, weighting the source like `pseudo_count` samples.
    pub fn forward_with_prior(
        &self,
        batch: ArrayView2<'_, f64>,
        pseudo_count: f64,
    ) -> Result<Array2<f64>> {
        if pseudo_count.is_nan() || pseudo_count < 0.0 {
            return Err(invalid("pseudo count must be >= 0"));
        }
        self.run(
            batch,
            Norm::Prior {
                pseudo: pseudo_count,
                target_count: None,
            },
            &mut Trace::default(),
        )
    }

    /// Forward pass over `batch` in chunks of `chunk` rows; only valid for
    /// modes where rows are processed independently.
    pub fn forward_chunked(
        &self,
        batch: ArrayView2<'_, f64>,
        mode: &EvalMode,
        chunk: usize,
    ) -> Result<Array2<f64>> {
        if matches!(mode, EvalMode::TrainStats) {
            return self.forward(batch, mode);
        }
        let parts = batch
            .axis_chunks_iter(Axis(0), chunk.max(1))
            .map(|c| self.forward(c, mode))
            .collect::<Result<Vec<_>>>()?;
        let views: Vec<_> = parts.iter().map(|p| p.view()).collect();
        ndarray::concatenate(Axis(0), &views).map_err(|e| Error::Format(e.to_string()))
    }

    pub(crate) fn run(
        &self,
        batch: ArrayView2<'_, f64>,
        norm: Norm<'_>,
        trace: &mut Trace,
    ) -> Result<Array2<f64>> {
        let (rows, cols) = batch.dim();
        if rows == 0 {
            return Err(Error::EmptyBatch);
        }
        if cols != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                found: cols,
            });
        }
        let mut x = batch.to_owned();
        let mut bn_index = 0;
        for layer in &self.layers {
            x = match layer {
                Layer::Dense(d) => {
                    let out = x.dot(&d.weights.t()) + &d.bias;
                    if trace.keep_cache {
                        trace.caches.push(LayerCache::Dense { input: x });
                    }
                    out
                }
                Layer::Relu => {
                    if trace.keep_cache {
                        trace.caches.push(LayerCache::Relu {
                            mask: x.mapv(|v| v > 0.0),
                        });
                    }
                    x.mapv(|v| v.max(0.0))
                }
                Layer::BatchNorm(bn) => {
                    let out = self.batch_norm(bn, bn_index, x, norm, trace)?;
                    bn_index += 1;
                    out
                }
            };
        }
        Ok(x)
    }

    fn batch_norm(
        &self,
        bn: &BatchNorm,
        bn_index: usize,
        x: Array2<f64>,
        norm: Norm<'_>,
        trace: &mut Trace,
    ) -> Result<Array2<f64>> {
        let needs_batch = matches!(norm, Norm::Batch | Norm::Prior { .. });
        let batch_stats = if needs_batch || trace.record_inputs {
            Some(estimate_stats(x.view())?)
        } else {
            None
        };
        let used = match norm {
            Norm::Batch => {
                if x.nrows() < 2 {
                    return Err(Error::TrainBatchTooSmall(x.nrows()));
                }
                batch_stats.clone().expect("computed")
            }
            Norm::Source => {
                bn.source.require_nonempty()?;
                bn.source.clone()
            }
            Norm::Adapted(targets, cfg) => {
                // a zero prior needs no source statistics
                if cfg.pseudo_count() != 0.0 {
                    bn.source.require_nonempty()?;
                }
                combine_stats(&bn.source, &targets[bn_index], cfg)?
            }
            Norm::Prior {
                pseudo,
                target_count,
            } => {
                let n = target_count.unwrap_or(x.nrows());
                if pseudo == 0.0 && x.nrows() < 2 {
                    return Err(Error::TrainBatchTooSmall(x.nrows()));
                }
                let target = batch_stats.as_ref().expect("computed");
                if pseudo == 0.0 {
                    target.clone()
                } else {
                    bn.source.require_nonempty()?;
                    combine_stats(&bn.source, target, CombineConfig::new(pseudo, n)?)?
                }
            }
        };
        if used.dim() != x.ncols() {
            return Err(Error::DimensionMismatch {
                expected: x.ncols(),
                found: used.dim(),
            });
        }
        let mean = Array1::from(used.mean().to_vec());
        let inv_std = Array1::from_iter(used.variance().iter().map(|v| 1.0 / (v + bn.eps).sqrt()));
        let normalized = (x - &mean) * &inv_std;
        let out = &normalized * &bn.gamma + &bn.beta;
        if trace.keep_cache {
            trace.caches.push(LayerCache::BatchNorm {
                normalized,
                inv_std,
            });
        }
        if trace.record_inputs {
            trace.bn_inputs.push(batch_stats.expect("computed"));
            trace.bn_used.push(used);
        }
        Ok(out)
    }

    /// Normalized, pre-affine activations of batch-norm layer `bn_index`
    /// under `mode`.
    pub fn normalized_activations(
        &self,
        batch: ArrayView2<'_, f64>,
        mode: &EvalMode,
        bn_index: usize,
    ) -> Result<Array2<f64>> {
        let mut trace = Trace {
            keep_cache: true,
            ..Trace::default()
        };
        self.run(batch, Norm::from(mode), &mut trace)?;
        trace
            .caches
            .into_iter()
            .filter_map(|c| match c {
                LayerCache::BatchNorm { normalized, .. } => Some(normalized),
                _ => None,
            })
            .nth(bn_index)
            .ok_or_else(|| invalid(format!("no batch-norm layer {bn_index}")))
    }

    /// Top-1 predictions (ties go to the lower class index).
    pub fn predict(&self, batch: ArrayView2<'_, f64>, mode: &EvalMode) -> Result<Vec<usize>> {
        Ok(argmax_rows(&self.forward(batch, mode)?))
    }
}

fn he_uniform(rng: &mut CounterRng, out: usize, fan_in: usize) -> Dense {
    let limit = (6.0 / fan_in as f64).sqrt();
    Dense {
        weights: Array2::from_shape_fn((out, fan_in), |_| rng.uniform_range(-limit, limit)),
        bias: Array1::zeros(out),
    }
}

pub fn argmax_rows(logits: &Array2<f64>) -> Vec<usize> {
    logits
        .rows()
        .into_iter()
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

/// Fraction of predictions equal to the labels.
pub fn accuracy(predictions: &[usize], labels: &[usize]) -> f64 {
    let hits = predictions
        .iter()
        .zip(labels)
        .filter(|(p, y)| p == y)
        .count();
    hits as f64 / labels.len().max(1) as f64
}
