//! Shift magnitude versus error.

use rayon::prelude::*;

use super::{corruption_seed, fmt6, top1_error};
use crate::corrupt::{apply_corruption, CorruptionFamily, CorruptionSpec};
use crate::data::Dataset;
use crate::error::{invalid, Result};
use crate::metrics::{label_layers, shift_report, ShiftMetric};
use crate::nn::{EvalMode, Network};
use crate::rng::CounterRng;

#[derive(Debug, Clone, PartialEq)]
pub struct ScanPoint {
    /// `None` for the clean data.
    pub spec: Option<CorruptionSpec>,
    /// Layer-averaged shift between stored and target statistics. Squared
    /// Wasserstein metrics are square-rooted per layer before averaging.
    pub shift: f64,
    /// Non-adapted top-1 error.
    pub error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScanResult {
    pub metric: ShiftMetric,
    pub clean: ScanPoint,
    pub points: Vec<ScanPoint>,
    /// Pearson correlation of shift and error over `points`.
    pub pearson: f64,
}

fn scan_point(
    net: &Network,
    data: &Dataset,
    spec: Option<CorruptionSpec>,
    metric: ShiftMetric,
) -> Result<ScanPoint> {
    let target = net.collect_stats(data.features(), &EvalMode::SourceStats)?;
    let report = shift_report(
        &label_layers(&net.source_stats()),
        &label_layers(&target),
        metric,
    )?;
    let shift = match metric {
        ShiftMetric::W2 | ShiftMetric::W2Normalized => {
            report.per_layer.iter().map(|(_, v)| v.sqrt()).sum::<f64>()
                / report.per_layer.len() as f64
        }
        ShiftMetric::Kl | ShiftMetric::Jeffrey => report.aggregate,
    };
    Ok(ScanPoint {
        spec,
        shift,
        error: top1_error(net, data, &EvalMode::SourceStats)?,
    })
}

/// Shift and non-adapted error for the clean data and every corruption.
pub fn shift_error_scan(
    net: &Network,
    clean: &Dataset,
    specs: &[CorruptionSpec],
    metric: ShiftMetric,
    seed: u64,
) -> Result<ScanResult> {
    let clean_point = scan_point(net, clean, None, metric)?;
    let points = specs
        .par_iter()
        .map(|spec| {
            let data = apply_corruption(clean, spec, corruption_seed(seed, spec));
            scan_point(net, &data, Some(*spec), metric)
        })
        .collect::<Result<Vec<_>>>()?;
    let (x, y): (Vec<f64>, Vec<f64>) = points.iter().map(|p| (p.shift, p.error)).unzip();
    let pearson = if points.len() >= 2 {
        pearson(&x, &y)?
    } else {
        f64::NAN
    };
    Ok(ScanResult {
        metric,
        clean: clean_point,
        points,
        pearson,
    })
}

impl ScanResult {
    /// `corruption,severity,wasserstein,error` as TSV, clean row first.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("corruption\tseverity\twasserstein\terror\n");
        for p in std::iter::once(&self.clean).chain(&self.points) {
            let (name, sev) = match &p.spec {
                Some(s) => (s.family.name(), s.severity),
                None => ("clean", 0),
            };
            out.push_str(&format!(
                "{name}\t{sev}\t{}\t{}\n",
                fmt6(p.shift),
                fmt6(p.error)
            ));
        }
        out
    }

    /// `(shift, error)` of one family, by severity.
    pub fn family_points(&self, family: CorruptionFamily) -> Vec<(f64, f64)> {
        self.points
            .iter()
            .filter(|p| p.spec.is_some_and(|s| s.family == family))
            .map(|p| (p.shift, p.error))
            .collect()
    }
}

pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(invalid(
            "pearson needs two equally long series of length >= 2",
        ));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(invalid("pearson is undefined for a constant series"));
    }
    Ok(sxy / (sxx * syy).sqrt())
}

/// Correlations after randomly permuting the errors, one per trial.
pub fn permutation_correlations(
    points: &[ScanPoint],
    trials: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    let x: Vec<f64> = points.iter().map(|p| p.shift).collect();
    (0..trials)
        .map(|t| {
            let mut y: Vec<f64> = points.iter().map(|p| p.error).collect();
            CounterRng::stream(seed, t as u64).shuffle(&mut y);
            pearson(&x, &y)
        })
        .collect()
}
