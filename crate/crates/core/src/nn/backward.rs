//! Softmax cross-entropy and backpropagation in per-batch statistics mode.

use ndarray::{Array1, Array2, ArrayView2, Axis};

use super::{Layer, LayerCache, Network, Norm, Trace};
use crate::error::{Error, Result};

/// Gradient with respect to one layer's parameters.
#[derive(Debug, Clone, PartialEq)]
pub enum LayerGradient {
    Dense {
        weights: Array2<f64>,
        bias: Array1<f64>,
    },
    BatchNorm {
        gamma: Array1<f64>,
        beta: Array1<f64>,
    },
    None,
}

/// One entry per layer, aligned with [`Network::layers`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<LayerGradient>,
}

impl Gradients {
    /// Flattened in the same order as [`Network::parameters`].
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for g in &self.layers {
            match g {
                LayerGradient::Dense { weights, bias } => {
                    out.extend(weights.iter());
                    out.extend(bias.iter());
                }
                LayerGradient::BatchNorm { gamma, beta } => {
                    out.extend(gamma.iter());
                    out.extend(beta.iter());
                }
                LayerGradient::None => {}
            }
        }
        out
    }
}

/// Mean cross-entropy of `softmax(logits)` and its gradient with respect to
/// the logits.
pub fn softmax_cross_entropy(
    logits: ArrayView2<'_, f64>,
    labels: &[usize],
) -> Result<(f64, Array2<f64>)> {
    let (rows, cols) = logits.dim();
    if rows != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: rows,
            found: labels.len(),
        });
    }
    if let Some(&bad) = labels.iter().find(|&&y| y >= cols) {
        return Err(Error::InvalidParameter(format!(
            "label {bad} out of range for {cols} classes"
        )));
    }
    let mut grad = Array2::zeros((rows, cols));
    let mut loss = 0.0;
    for (i, row) in logits.rows().into_iter().enumerate() {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        let sum: f64 = row.iter().map(|v| (v - max).exp()).sum();
        let log_sum = max + sum.ln();
        loss += log_sum - row[labels[i]];
        for (j, &v) in row.iter().enumerate() {
            grad[[i, j]] = (v - log_sum).exp() / rows as f64;
        }
        grad[[i, labels[i]]] -= 1.0 / rows as f64;
    }
    Ok((loss / rows as f64, grad))
}

impl Network {
    /// Mean loss on the batch and parameter gradients, with every batch-norm
    /// layer normalizing by the batch's own statistics.
    pub fn loss_and_gradients(
        &self,
        batch: ArrayView2<'_, f64>,
        labels: &[usize],
    ) -> Result<(f64, Gradients)> {
        let mut trace = Trace {
            keep_cache: true,
            ..Trace::default()
        };
        let logits = self.run(batch, Norm::Batch, &mut trace)?;
        let (loss, mut upstream) = softmax_cross_entropy(logits.view(), labels)?;
        let mut grads = vec![LayerGradient::None; self.layers().len()];
        for (i, (layer, cache)) in self.layers().iter().zip(&trace.caches).enumerate().rev() {
            upstream = match (layer, cache) {
                (Layer::Dense(d), LayerCache::Dense { input }) => {
                    grads[i] = LayerGradient::Dense {
                        weights: upstream.t().dot(input),
                        bias: upstream.sum_axis(Axis(0)),
                    };
                    upstream.dot(&d.weights)
                }
                (Layer::Relu, LayerCache::Relu { mask }) => {
                    ndarray::Zip::from(&mut upstream)
                        .and(mask)
                        .for_each(|g, &m| {
                            if !m {
                                *g = 0.0;
                            }
                        });
                    upstream
                }
                (
                    Layer::BatchNorm(bn),
                    LayerCache::BatchNorm {
                        normalized,
                        inv_std,
                    },
                ) => {
                    grads[i] = LayerGradient::BatchNorm {
                        gamma: (&upstream * normalized).sum_axis(Axis(0)),
                        beta: upstream.sum_axis(Axis(0)),
                    };
                    let b = upstream.nrows() as f64;
                    let dxhat = &upstream * &bn.gamma;
                    let sum_dxhat = dxhat.sum_axis(Axis(0));
                    let sum_dxhat_xhat = (&dxhat * normalized).sum_axis(Axis(0));
                    let centered = dxhat * b - &sum_dxhat - &(normalized * &sum_dxhat_xhat);
                    centered * &(inv_std / b)
                }
                _ => unreachable!("trace caches follow the layer list"),
            };
        }
        Ok((loss, Gradients { layers: grads }))
    }

    /// Mean loss on the batch in the given normalization policy.
    pub(crate) fn loss(
        &self,
        batch: ArrayView2<'_, f64>,
        labels: &[usize],
        norm: Norm<'_>,
    ) -> Result<f64> {
        let logits = self.run(batch, norm, &mut Trace::default())?;
        Ok(softmax_cross_entropy(logits.view(), labels)?.0)
    }

    /// Number of trainable scalars (dense weights and biases, γ and β).
    pub fn parameter_count(&self) -> usize {
        self.layers()
            .iter()
            .map(|l| match l {
                Layer::Dense(d) => d.weights.len() + d.bias.len(),
                Layer::BatchNorm(bn) => bn.gamma.len() + bn.beta.len(),
                Layer::Relu => 0,
            })
            .sum()
    }

    /// Trainable parameters in a fixed order, mutable.
    pub(crate) fn parameters_mut(&mut self) -> Vec<&mut f64> {
        let mut out = Vec::new();
        for layer in self.layers_mut() {
            match layer {
                Layer::Dense(d) => {
                    out.extend(d.weights.iter_mut());
                    out.extend(d.bias.iter_mut());
                }
                Layer::BatchNorm(bn) => {
                    out.extend(bn.gamma.iter_mut());
                    out.extend(bn.beta.iter_mut());
                }
                Layer::Relu => {}
            }
        }
        out
    }

    /// Plain SGD step `θ ← θ − lr·g`.
    pub fn apply_gradients(&mut self, grads: &Gradients, learning_rate: f64) -> Result<()> {
        let flat = grads.flatten();
        if flat.len() != self.parameter_count() {
            return Err(Error::DimensionMismatch {
                expected: self.parameter_count(),
                found: flat.len(),
            });
        }
        for (p, g) in self.parameters_mut().into_iter().zip(flat) {
            *p -= learning_rate * g;
        }
        Ok(())
    }
}
