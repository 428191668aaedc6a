//! Per-feature first- and second-order statistics.
//!
//! Variances are always the biased (1/n) estimate. Sums over samples use an
//! exactly rounded accumulator, so the result does not depend on sample order.

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Mean and biased variance per feature, with the number of samples summarized.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureStats {
    mean: Vec<f64>,
    variance: Vec<f64>,
    count: f64,
}

impl FeatureStats {
    pub fn new(mean: Vec<f64>, variance: Vec<f64>, count: f64) -> Result<Self> {
        if mean.is_empty() {
            return Err(invalid("statistics need at least one feature"));
        }
        if mean.len() != variance.len() {
            return Err(Error::DimensionMismatch {
                expected: mean.len(),
                found: variance.len(),
            });
        }
        if mean.iter().chain(&variance).any(|v| !v.is_finite()) || count.is_nan() {
            return Err(Error::NonFinite);
        }
        if variance.iter().any(|&v| v < 0.0) {
            return Err(invalid("variance entries must be >= 0"));
        }
        if count <= 0.0 {
            return Err(invalid("count must be > 0 (use FeatureStats::empty)"));
        }
        Ok(Self {
            mean,
            variance,
            count,
        })
    }

    /// The designated empty value: zero count, zero moments.
    pub fn empty(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            variance: vec![0.0; dim],
            count: 0.0,
        }
    }

    /// Univariate convenience constructor.
    pub fn scalar(mean: f64, variance: f64, count: f64) -> Result<Self> {
        Self::new(vec![mean], vec![variance], count)
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn variance(&self) -> &[f64] {
        &self.variance
    }

    pub fn count(&self) -> f64 {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0.0
    }

    pub fn std_dev(&self) -> Vec<f64> {
        self.variance.iter().map(|v| v.sqrt()).collect()
    }

    pub(crate) fn require_nonempty(&self) -> Result<()> {
        if self.is_empty() {
            Err(Error::EmptyStats)
        } else {
            Ok(())
        }
    }

    pub(crate) fn require_same_dim(&self, other: &Self) -> Result<()> {
        if self.dim() != other.dim() {
            Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: other.dim(),
            })
        } else {
            Ok(())
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&StatsFile::from(self))?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: StatsFile = serde_json::from_str(text)?;
        file.try_into()
    }
}

/// On-disk layout of [`FeatureStats`].
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StatsFile {
    pub dim: usize,
    pub count: f64,
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
    pub format_version: u32,
}

impl From<&FeatureStats> for StatsFile {
    fn from(s: &FeatureStats) -> Self {
        Self {
            dim: s.dim(),
            count: s.count,
            mean: s.mean.clone(),
            variance: s.variance.clone(),
            format_version: 1,
        }
    }
}

impl TryFrom<StatsFile> for FeatureStats {
    type Error = Error;

    fn try_from(f: StatsFile) -> Result<Self> {
        if f.format_version != 1 {
            return Err(Error::Format(format!(
                "unsupported stats format_version {}",
                f.format_version
            )));
        }
        if f.dim != f.mean.len() {
            return Err(Error::DimensionMismatch {
                expected: f.dim,
                found: f.mean.len(),
            });
        }
        if f.count == 0.0 {
            if f.mean.len() != f.variance.len() || f.dim == 0 {
                return Err(Error::Format("malformed empty statistics".into()));
            }
            return Ok(FeatureStats::empty(f.dim));
        }
        FeatureStats::new(f.mean, f.variance, f.count)
    }
}

/// Pseudo sample size of the source prior and the target sample count.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CombineConfig {
    pseudo_count: f64,
    target_count: usize,
}

impl CombineConfig {
    /// `pseudo_count` may be `f64::INFINITY`, which selects the source statistics.
    pub fn new(pseudo_count: f64, target_count: usize) -> Result<Self> {
        if pseudo_count.is_nan() || pseudo_count < 0.0 {
            return Err(invalid("pseudo count N must be >= 0"));
        }
        if target_count == 0 {
            return Err(invalid("target count n must be >= 1"));
        }
        Ok(Self {
            pseudo_count,
            target_count,
        })
    }

    pub fn pseudo_count(&self) -> f64 {
        self.pseudo_count
    }

    pub fn target_count(&self) -> usize {
        self.target_count
    }

    /// `(source_weight, target_weight)`, summing to one.
    pub fn weights(&self) -> (f64, f64) {
        let n = self.target_count as f64;
        let target_w = if self.pseudo_count.is_infinite() {
            0.0
        } else {
            n / (self.pseudo_count + n)
        };
        (1.0 - target_w, target_w)
    }
}

/// Exactly rounded floating-point sum (Shewchuk partials).
pub(crate) fn exact_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut partials: Vec<f64> = Vec::new();
    for mut x in values {
        let mut i = 0;
        for j in 0..partials.len() {
            let mut y = partials[j];
            if x.abs() < y.abs() {
                std::mem::swap(&mut x, &mut y);
            }
            let hi = x + y;
            let lo = y - (hi - x);
            if lo != 0.0 {
                partials[i] = lo;
                i += 1;
            }
            x = hi;
        }
        partials.truncate(i);
        partials.push(x);
    }
    // Round the expansion to nearest, as in Python's math.fsum.
    let mut n = partials.len();
    if n == 0 {
        return 0.0;
    }
    n -= 1;
    let mut hi = partials[n];
    let mut lo = 0.0;
    while n > 0 {
        let x = hi;
        n -= 1;
        let y = partials[n];
        hi = x + y;
        let yr = hi - x;
        lo = y - yr;
        if lo != 0.0 {
            break;
        }
    }
    if n > 0 && ((lo < 0.0 && partials[n - 1] < 0.0) || (lo > 0.0 && partials[n - 1] > 0.0)) {
        let y = lo * 2.0;
        let x = hi + y;
        let yr = x - hi;
        if y == yr {
            hi = x;
        }
    }
    hi
}

/// Per-feature mean and biased variance of a `samples x features` batch.
pub fn estimate_stats(batch: ArrayView2<'_, f64>) -> Result<FeatureStats> {
    let (n, d) = batch.dim();
    if n == 0 || d == 0 {
        return Err(Error::EmptyBatch);
    }
    if batch.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite);
    }
    let nf = n as f64;
    let mut mean = Vec::with_capacity(d);
    let mut variance = Vec::with_capacity(d);
    for col in batch.columns() {
        let m0 = exact_sum(col.iter().copied()) / nf;
        // one refinement step removes the rounding of the division
        let m = m0 + exact_sum(col.iter().map(|&x| x - m0)) / nf;
        let v = exact_sum(col.iter().map(|&x| (x - m) * (x - m))) / nf;
        mean.push(m);
        variance.push(v);
    }
    FeatureStats::new(mean, variance, nf)
}

/// Prior-weighted combination of source and target statistics:
/// `N/(N+n) * source + n/(N+n) * target`, elementwise on mean and variance.
pub fn combine_stats(
    source: &FeatureStats,
    target: &FeatureStats,
    cfg: CombineConfig,
) -> Result<FeatureStats> {
    source.require_same_dim(target)?;
    if target.count() != cfg.target_count() as f64 {
        log::warn!(
            "combine_stats: target count {} differs from configured n = {}",
            target.count(),
            cfg.target_count()
        );
    }
    let (ws, wt) = cfg.weights();
    let mix = |s: &[f64], t: &[f64]| -> Vec<f64> {
        s.iter()
            .zip(t)
            .map(|(&a, &b)| {
                if wt == 0.0 {
                    a
                } else if ws == 0.0 {
                    b
                } else {
                    ws * a + wt * b
                }
            })
            .collect()
    };
    let mean = mix(&source.mean, &target.mean);
    let variance = mix(&source.variance, &target.variance);
    let count = cfg.pseudo_count() + cfg.target_count() as f64;
    Ok(FeatureStats {
        mean,
        variance,
        count,
    })
}

/// Upper limit on the effective sample count carried by an EMA.
pub fn ema_count_cap(decay: f64) -> f64 {
    2.0 / (1.0 - decay)
}

/// Exponential moving average `decay * running + (1 - decay) * batch`.
pub fn ema_update(
    running: &FeatureStats,
    batch: &FeatureStats,
    decay: f64,
) -> Result<FeatureStats> {
    if !(decay > 0.0 && decay < 1.0) {
        return Err(invalid(format!(
            "EMA decay must lie in (0, 1), got {decay}"
        )));
    }
    running.require_same_dim(batch)?;
    let blend = |r: &[f64], b: &[f64]| -> Vec<f64> {
        r.iter()
            .zip(b)
            .map(|(&x, &y)| decay * x + (1.0 - decay) * y)
            .collect()
    };
    let count = (running.count + batch.count).min(ema_count_cap(decay));
    Ok(FeatureStats {
        mean: blend(&running.mean, &batch.mean),
        variance: blend(&running.variance, &batch.variance),
        count,
    })
}

/// Exact pooling of two summaries over disjoint samples.
pub fn merge_stats(a: &FeatureStats, b: &FeatureStats) -> Result<FeatureStats> {
    a.require_same_dim(b)?;
    if a.count < 1.0 || b.count < 1.0 {
        return Err(invalid("merge_stats needs both counts >= 1"));
    }
    let n = a.count + b.count;
    let fa = a.count / n;
    let fb = b.count / n;
    let mut mean = Vec::with_capacity(a.dim());
    let mut variance = Vec::with_capacity(a.dim());
    for i in 0..a.dim() {
        let delta = b.mean[i] - a.mean[i];
        mean.push(a.mean[i] + delta * fb);
        variance.push(fa * a.variance[i] + fb * b.variance[i] + delta * delta * fa * fb);
    }
    Ok(FeatureStats {
        mean,
        variance,
        count: n,
    })
}
