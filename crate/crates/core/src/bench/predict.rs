//! Predicting errors of unseen corruptions from their shift.

use super::{fmt6, ScanResult};
use crate::corrupt::CorruptionFamily;
use crate::error::{invalid, Result};

/// `error ≈ slope * shift + intercept`, fitted on one corruption family.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearErrorModel {
    pub slope: f64,
    pub intercept: f64,
    pub fit_domain: String,
}

/// Ordinary least squares on `(shift, error)` pairs.
pub fn fit_error_predictor(points: &[(f64, f64)], fit_domain: &str) -> Result<LinearErrorModel> {
    if points.len() < 2 {
        return Err(invalid("need at least two points to fit a line"));
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx.is_nan() || sxx <= 0.0 {
        return Err(invalid("all shift values are equal"));
    }
    let slope = sxy / sxx;
    if !slope.is_finite() {
        return Err(invalid("non-finite regression slope"));
    }
    Ok(LinearErrorModel {
        slope,
        intercept: my - slope * mx,
        fit_domain: fit_domain.to_owned(),
    })
}

impl LinearErrorModel {
    /// Predicted error, clamped to `[0, 1]`.
    pub fn predict(&self, shift: f64) -> f64 {
        (self.slope * shift + self.intercept).clamp(0.0, 1.0)
    }

    /// Mean of `|predicted − true|` over the points.
    pub fn mean_abs_delta(&self, points: &[(f64, f64)]) -> f64 {
        points
            .iter()
            .map(|&(w, e)| (self.predict(w) - e).abs())
            .sum::<f64>()
            / points.len().max(1) as f64
    }
}

/// One report line per evaluated family.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionRow {
    pub family: String,
    /// Mean true error over the family's severities.
    pub true_error: f64,
    /// Mean predicted error.
    pub predicted: f64,
    /// Mean absolute per-severity deviation.
    pub abs_delta: f64,
    pub coef: f64,
    pub intercept: f64,
}

/// Fits on `holdout` and evaluates on each of `test`.
pub fn prediction_report(
    scan: &ScanResult,
    holdout: CorruptionFamily,
    test: &[CorruptionFamily],
) -> Result<(LinearErrorModel, Vec<PredictionRow>)> {
    let model = fit_error_predictor(&scan.family_points(holdout), holdout.name())?;
    let mut rows = Vec::with_capacity(test.len());
    for &family in test {
        let pts = scan.family_points(family);
        if pts.is_empty() {
            return Err(invalid(format!("scan has no points for `{family}`")));
        }
        let n = pts.len() as f64;
        rows.push(PredictionRow {
            family: family.name().to_owned(),
            true_error: pts.iter().map(|p| p.1).sum::<f64>() / n,
            predicted: pts.iter().map(|p| model.predict(p.0)).sum::<f64>() / n,
            abs_delta: model.mean_abs_delta(&pts),
            coef: model.slope,
            intercept: model.intercept,
        });
    }
    Ok((model, rows))
}

/// `family,true,pred,abs_delta,coef,intercept` as TSV.
pub fn prediction_tsv(rows: &[PredictionRow]) -> String {
    let mut out = String::from("family\ttrue\tpred\tabs_delta\tcoef\tintercept\n");
    for r in rows {
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\t{}\n",
            r.family,
            fmt6(r.true_error),
            fmt6(r.predicted),
            fmt6(r.abs_delta),
            fmt6(r.coef),
            fmt6(r.intercept)
        ));
    }
    out
}
