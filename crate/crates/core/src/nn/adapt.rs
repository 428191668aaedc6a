//! Target statistics estimation and adaptation procedures.

use std::ops::Range;

use ndarray::{ArrayView2, Axis};

use super::{EvalMode, Layer, Network, Norm, Trace};
use crate::error::{invalid, Error, Result};
use crate::stats::{merge_stats, CombineConfig, FeatureStats};

/// Rows per chunk when statistics can be pooled across chunks.
const STATS_CHUNK: usize = 1024;

/// A contiguous range of layer indices adapted together.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Stage {
    pub layers: Range<usize>,
}

impl Stage {
    pub fn new(layers: Range<usize>) -> Self {
        Self { layers }
    }

    /// The whole network as one stage.
    pub fn whole(net: &Network) -> Vec<Stage> {
        vec![Stage::new(0..net.layers().len())]
    }

    /// One stage per batch-norm layer; each stage ends right after its
    /// batch-norm layer and the last one extends to the output.
    pub fn per_batch_norm(net: &Network) -> Vec<Stage> {
        let bn = net.bn_indices();
        if bn.is_empty() {
            return Self::whole(net);
        }
        let mut stages = Vec::with_capacity(bn.len());
        let mut start = 0;
        for (k, &i) in bn.iter().enumerate() {
            let end = if k + 1 == bn.len() {
                net.layers().len()
            } else {
                i + 1
            };
            stages.push(Stage::new(start..end));
            start = end;
        }
        stages
    }
}

fn validate_stages(net: &Network, stages: &[Stage]) -> Result<()> {
    let mut next = 0;
    for (i, s) in stages.iter().enumerate() {
        if s.layers.start != next || s.layers.end <= s.layers.start {
            return Err(invalid(format!(
                "stage {i} does not continue the partition at layer {next}"
            )));
        }
        next = s.layers.end;
    }
    if next != net.layers().len() {
        return Err(invalid(format!(
            "stages cover {next} of {} layers",
            net.layers().len()
        )));
    }
    Ok(())
}

impl Network {
    /// Statistics of every batch-norm layer's input on `data`, with the
    /// batch-norm layers normalizing according to `mode`. Under
    /// [`EvalMode::TrainStats`] the whole dataset is one batch; otherwise rows
    /// are processed in chunks and pooled.
    pub fn collect_stats(
        &self,
        data: ArrayView2<'_, f64>,
        mode: &EvalMode,
    ) -> Result<Vec<FeatureStats>> {
        if data.nrows() == 0 {
            return Err(Error::EmptyBatch);
        }
        if let EvalMode::AdaptedStats { target_stats, .. } = mode {
            if target_stats.len() != self.bn_count() {
                return Err(Error::DimensionMismatch {
                    expected: self.bn_count(),
                    found: target_stats.len(),
                });
            }
        }
        let chunk = if matches!(mode, EvalMode::TrainStats) {
            data.nrows()
        } else {
            STATS_CHUNK
        };
        let mut pooled: Option<Vec<FeatureStats>> = None;
        for part in data.axis_chunks_iter(Axis(0), chunk) {
            let mut trace = Trace {
                record_inputs: true,
                ..Trace::default()
            };
            self.run(part, Norm::from(mode), &mut trace)?;
            pooled = Some(match pooled {
                None => trace.bn_inputs,
                Some(acc) => acc
                    .iter()
                    .zip(&trace.bn_inputs)
                    .map(|(a, b)| merge_stats(a, b))
                    .collect::<Result<_>>()?,
            });
        }
        Ok(pooled.expect("data is nonempty"))
    }

    /// Stage-wise re-estimation: each stage gets one pass per batch-norm
    /// layer it contains, every pass propagating through already adapted
    /// upstream stages and replacing the stage's statistics.
    pub fn adapt_layerwise(&self, data: ArrayView2<'_, f64>, stages: &[Stage]) -> Result<Network> {
        validate_stages(self, stages)?;
        if data.nrows() == 0 {
            return Err(Error::EmptyBatch);
        }
        let bn_layers = self.bn_indices();
        let mut net = self.clone();
        for stage in stages {
            let owned: Vec<usize> = bn_layers
                .iter()
                .enumerate()
                .filter(|(_, &l)| stage.layers.contains(&l))
                .map(|(k, _)| k)
                .collect();
            for _ in 0..owned.len() {
                let fresh = net.collect_stats(data, &EvalMode::SourceStats)?;
                let mut stats = net.source_stats();
                for &k in &owned {
                    stats[k] = fresh[k].clone();
                }
                net.set_source_stats(stats)?;
            }
        }
        Ok(net)
    }

    /// Target statistics of every batch-norm layer on the whole of `data`,
    /// with upstream layers already normalizing with the combined statistics,
    /// packaged as an evaluation mode. `target_count` defaults to the number
    /// of rows.
    pub fn adapt_full(
        &self,
        data: ArrayView2<'_, f64>,
        pseudo_count: f64,
        target_count: Option<usize>,
    ) -> Result<EvalMode> {
        if data.nrows() == 0 {
            return Err(Error::EmptyBatch);
        }
        let n = target_count.unwrap_or(data.nrows());
        let combine = CombineConfig::new(pseudo_count, n)?;
        let mut trace = Trace {
            record_inputs: true,
            ..Trace::default()
        };
        self.run(
            data,
            Norm::Prior {
                pseudo: pseudo_count,
                target_count: Some(n),
            },
            &mut trace,
        )?;
        Ok(EvalMode::AdaptedStats {
            target_stats: trace.bn_inputs,
            combine,
        })
    }

    /// Replaces every batch-norm layer's stored statistics with those in an
    /// adapted mode (combined with the current ones).
    pub fn with_adapted_stats(&self, mode: &EvalMode) -> Result<Network> {
        let EvalMode::AdaptedStats {
            target_stats,
            combine,
        } = mode
        else {
            return Err(invalid("with_adapted_stats needs an AdaptedStats mode"));
        };
        let combined = self
            .layers()
            .iter()
            .filter_map(|l| match l {
                Layer::BatchNorm(bn) => Some(&bn.source),
                _ => None,
            })
            .zip(target_stats)
            .map(|(s, t)| crate::stats::combine_stats(s, t, *combine))
            .collect::<Result<Vec<_>>>()?;
        let mut net = self.clone();
        net.set_source_stats(combined)?;
        Ok(net)
    }
}
