//! Distances and divergences between diagonal Gaussians described by
//! [`FeatureStats`], and their aggregation across network layers.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::stats::FeatureStats;

/// Squared 2-Wasserstein distance between diagonal Gaussians.
pub fn w2_squared(a: &FeatureStats, b: &FeatureStats) -> Result<f64> {
    check_pair(a, b)?;
    let mut total = 0.0;
    for i in 0..a.dim() {
        let dm = a.mean()[i] - b.mean()[i];
        let ds = a.variance()[i].sqrt() - b.variance()[i].sqrt();
        total += dm * dm + ds * ds;
    }
    Ok(total)
}

/// Squared Wasserstein distance after whitening both arguments with the
/// source statistics. Not symmetric.
pub fn w2_normalized(source: &FeatureStats, target: &FeatureStats) -> Result<f64> {
    check_pair(source, target)?;
    let mut total = 0.0;
    for i in 0..source.dim() {
        let vs = source.variance()[i];
        if vs <= 0.0 {
            return Err(Error::DegenerateSource { feature: i });
        }
        let ratio = target.variance()[i] / vs;
        let dm = target.mean()[i] - source.mean()[i];
        total += 1.0 + ratio - 2.0 * ratio.sqrt() + dm * dm / vs;
    }
    Ok(total)
}

/// `KL(p || q)` for diagonal Gaussians.
pub fn kl_gauss_diag(p: &FeatureStats, q: &FeatureStats) -> Result<f64> {
    check_pair(p, q)?;
    require_positive(p)?;
    require_positive(q)?;
    let mut total = 0.0;
    for i in 0..p.dim() {
        let (vp, vq) = (p.variance()[i], q.variance()[i]);
        let dm = q.mean()[i] - p.mean()[i];
        total += vp / vq + dm * dm / vq - 1.0 + (vq / vp).ln();
    }
    Ok(0.5 * total)
}

/// Jeffrey divergence `(KL(a||b) + KL(b||a)) / 2`.
pub fn jeffrey(a: &FeatureStats, b: &FeatureStats) -> Result<f64> {
    check_pair(a, b)?;
    require_positive(a)?;
    require_positive(b)?;
    // Summed in a fixed order of symmetric terms so that jeffrey(a, b) and
    // jeffrey(b, a) agree bit for bit.
    let mut total = 0.0;
    for i in 0..a.dim() {
        let (va, vb) = (a.variance()[i], b.variance()[i]);
        let dm = a.mean()[i] - b.mean()[i];
        let dm2 = dm * dm;
        let ratios = (va / vb) + (vb / va);
        let inv = (1.0 / va) + (1.0 / vb);
        total += ratios + dm2 * inv - 2.0;
    }
    Ok(0.25 * total)
}

fn check_pair(a: &FeatureStats, b: &FeatureStats) -> Result<()> {
    a.require_same_dim(b)?;
    a.require_nonempty()?;
    b.require_nonempty()
}

fn require_positive(s: &FeatureStats) -> Result<()> {
    match s.variance().iter().position(|&v| v <= 0.0) {
        Some(feature) => Err(Error::ZeroVariance { feature }),
        None => Ok(()),
    }
}

/// Selects one of the shift metrics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShiftMetric {
    /// Squared Wasserstein distance.
    W2,
    /// Source-normalized squared Wasserstein distance.
    #[serde(rename = "w2n")]
    W2Normalized,
    Kl,
    Jeffrey,
}

impl ShiftMetric {
    pub const ALL: [ShiftMetric; 4] = [Self::W2, Self::W2Normalized, Self::Kl, Self::Jeffrey];

    pub fn name(self) -> &'static str {
        match self {
            Self::W2 => "w2",
            Self::W2Normalized => "w2n",
            Self::Kl => "kl",
            Self::Jeffrey => "jeffrey",
        }
    }

    /// Evaluates the metric with `source` as the reference distribution.
    pub fn eval(self, source: &FeatureStats, target: &FeatureStats) -> Result<f64> {
        match self {
            Self::W2 => w2_squared(source, target),
            Self::W2Normalized => w2_normalized(source, target),
            Self::Kl => kl_gauss_diag(target, source),
            Self::Jeffrey => jeffrey(source, target),
        }
    }
}

impl fmt::Display for ShiftMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ShiftMetric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| {
                invalid(format!(
                    "unknown metric `{s}` (expected w2 | w2n | kl | jeffrey)"
                ))
            })
    }
}

/// Per-layer metric values and their unweighted mean.
#[derive(Debug, Clone, PartialEq)]
pub struct ShiftReport {
    pub metric: ShiftMetric,
    pub per_layer: Vec<(String, f64)>,
    pub aggregate: f64,
}

impl ShiftReport {
    /// CSV with columns `layer,metric,value` and a final `aggregate` row.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("layer,metric,value\n");
        for (label, v) in &self.per_layer {
            out.push_str(&format!("{label},{},{v}\n", self.metric));
        }
        out.push_str(&format!("aggregate,{},{}\n", self.metric, self.aggregate));
        out
    }
}

/// Compares labelled per-layer statistics layer by layer.
pub fn shift_report(
    source: &[(String, FeatureStats)],
    target: &[(String, FeatureStats)],
    metric: ShiftMetric,
) -> Result<ShiftReport> {
    if source.is_empty() {
        return Err(invalid("shift_report needs at least one layer"));
    }
    if source.len() != target.len() {
        return Err(invalid(format!(
            "layer count mismatch: {} source vs {} target",
            source.len(),
            target.len()
        )));
    }
    let mut per_layer = Vec::with_capacity(source.len());
    for ((ls, s), (lt, t)) in source.iter().zip(target) {
        if ls != lt {
            return Err(invalid(format!("layer label mismatch: `{ls}` vs `{lt}`")));
        }
        let v = metric.eval(s, t)?;
        if !v.is_finite() {
            return Err(Error::NonFinite);
        }
        per_layer.push((ls.clone(), v.max(0.0)));
    }
    let aggregate = per_layer.iter().map(|(_, v)| v).sum::<f64>() / per_layer.len() as f64;
    Ok(ShiftReport {
        metric,
        per_layer,
        aggregate,
    })
}

/// Attaches `bn{i}` labels to a list of per-layer statistics.
pub fn label_layers(stats: &[FeatureStats]) -> Vec<(String, FeatureStats)> {
    stats
        .iter()
        .enumerate()
        .map(|(i, s)| (format!("bn{i}"), s.clone()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::CounterRng;
    use proptest::prelude::*;

    fn uni(m: f64, v: f64) -> FeatureStats {
        FeatureStats::scalar(m, v, 1.0).unwrap()
    }

    fn random_stats(rng: &mut CounterRng, dim: usize) -> FeatureStats {
        let mean = (0..dim).map(|_| rng.uniform_range(-3.0, 3.0)).collect();
        let var = (0..dim).map(|_| rng.uniform_range(0.05, 4.0)).collect();
        FeatureStats::new(mean, var, 10.0).unwrap()
    }

    #[test]
    fn w2_examples() {
        assert_eq!(w2_squared(&uni(1.0, 2.0), &uni(1.0, 2.0)).unwrap(), 0.0);
        assert_eq!(w2_squared(&uni(0.0, 1.0), &uni(1.0, 1.0)).unwrap(), 1.0);
        assert_eq!(w2_squared(&uni(0.0, 4.0), &uni(3.0, 1.0)).unwrap(), 10.0);
        // zero variance stays finite
        assert_eq!(w2_squared(&uni(0.0, 0.0), &uni(0.0, 4.0)).unwrap(), 4.0);
    }

    #[test]
    fn w2_matches_quantile_coupling() {
        // Sorted samples realize the optimal coupling between 1-D Gaussians.
        let n = 1_000_000;
        let mut rng = CounterRng::new(99);
        let mut xs: Vec<f64> = (0..n).map(|_| rng.normal(0.0, 2.0)).collect();
        let mut ys: Vec<f64> = (0..n).map(|_| rng.normal(3.0, 1.0)).collect();
        xs.sort_by(f64::total_cmp);
        ys.sort_by(f64::total_cmp);
        let mc = xs
            .iter()
            .zip(&ys)
            .map(|(x, y)| (x - y).powi(2))
            .sum::<f64>()
            / n as f64;
        let exact = w2_squared(&uni(0.0, 4.0), &uni(3.0, 1.0)).unwrap();
        assert!((mc - exact).abs() / exact < 0.01, "mc {mc} vs {exact}");
    }

    #[test]
    fn normalized_examples() {
        assert_eq!(w2_normalized(&uni(1.0, 3.0), &uni(1.0, 3.0)).unwrap(), 0.0);
        assert_eq!(w2_normalized(&uni(0.0, 4.0), &uni(3.0, 1.0)).unwrap(), 2.5);
        assert_eq!(w2_normalized(&uni(0.0, 1.0), &uni(0.0, 4.0)).unwrap(), 1.0);
        assert_eq!(w2_normalized(&uni(0.0, 4.0), &uni(0.0, 1.0)).unwrap(), 0.25);
        let err = w2_normalized(&uni(0.0, 0.0), &uni(0.0, 1.0)).unwrap_err();
        assert!(err.to_string().starts_with("degenerate source"));
    }

    /// Simpson integration of `p ln(p/q)`.
    fn kl_quadrature(mp: f64, vp: f64, mq: f64, vq: f64) -> f64 {
        let pdf = |x: f64, m: f64, v: f64| {
            (-(x - m).powi(2) / (2.0 * v)).exp() / (std::f64::consts::TAU * v).sqrt()
        };
        let (lo, hi, steps) = (-30.0, 30.0, 200_000);
        let h = (hi - lo) / steps as f64;
        let f = |x: f64| {
            let p = pdf(x, mp, vp);
            if p == 0.0 {
                0.0
            } else {
                p * (p / pdf(x, mq, vq)).ln()
            }
        };
        let mut s = f(lo) + f(hi);
        for k in 1..steps {
            let w = if k % 2 == 1 { 4.0 } else { 2.0 };
            s += w * f(lo + k as f64 * h);
        }
        s * h / 3.0
    }

    #[test]
    fn kl_examples() {
        assert_eq!(kl_gauss_diag(&uni(1.0, 2.0), &uni(1.0, 2.0)).unwrap(), 0.0);
        assert!((kl_gauss_diag(&uni(0.0, 1.0), &uni(1.0, 1.0)).unwrap() - 0.5).abs() < 1e-15);
        let kl = kl_gauss_diag(&uni(0.0, 2.0), &uni(0.0, 1.0)).unwrap();
        let quad = kl_quadrature(0.0, 2.0, 0.0, 1.0);
        assert!((kl - quad).abs() < 1e-8);
        assert!((kl - 0.153426).abs() < 1e-6);
        assert!(matches!(
            kl_gauss_diag(&uni(0.0, 0.0), &uni(0.0, 1.0)),
            Err(Error::ZeroVariance { .. })
        ));
    }

    #[test]
    fn jeffrey_examples() {
        assert_eq!(jeffrey(&uni(0.5, 2.0), &uni(0.5, 2.0)).unwrap(), 0.0);
        assert!((jeffrey(&uni(0.0, 1.0), &uni(1.0, 1.0)).unwrap() - 0.5).abs() < 1e-15);
        let a = uni(0.0, 2.0);
        let b = uni(0.0, 1.0);
        let kl1 = kl_gauss_diag(&a, &b).unwrap();
        let kl2 = kl_gauss_diag(&b, &a).unwrap();
        assert!((kl2 - 0.096574).abs() < 1e-6);
        let j = jeffrey(&a, &b).unwrap();
        assert!((j - 0.5 * (kl1 + kl2)).abs() < 1e-12);
        assert!((j - 0.125).abs() < 1e-12);
    }

    #[test]
    fn jeffrey_matches_two_kl_construction() {
        let mut rng = CounterRng::new(5);
        for _ in 0..200 {
            let a = random_stats(&mut rng, 4);
            let b = random_stats(&mut rng, 4);
            let two_kl = 0.5 * (kl_gauss_diag(&a, &b).unwrap() + kl_gauss_diag(&b, &a).unwrap());
            assert!((jeffrey(&a, &b).unwrap() - two_kl).abs() < 1e-10 * (1.0 + two_kl));
        }
    }

    #[test]
    fn report_examples() {
        let s = vec![
            ("bn0".to_string(), uni(0.0, 1.0)),
            ("bn1".to_string(), uni(0.0, 1.0)),
        ];
        let r = shift_report(&s, &s, ShiftMetric::W2Normalized).unwrap();
        assert_eq!(r.aggregate, 0.0);
        assert!(r.per_layer.iter().all(|(_, v)| *v == 0.0));

        // normalized values 1.0 and 3.0
        let t = vec![
            ("bn0".to_string(), uni(1.0, 1.0)),
            ("bn1".to_string(), uni(3f64.sqrt(), 1.0)),
        ];
        let r = shift_report(&s, &t, ShiftMetric::W2Normalized).unwrap();
        assert!((r.per_layer[0].1 - 1.0).abs() < 1e-12);
        assert!((r.per_layer[1].1 - 3.0).abs() < 1e-12);
        assert!((r.aggregate - 2.0).abs() < 1e-12);

        let csv = r.to_csv();
        assert!(csv.starts_with("layer,metric,value\nbn0,w2n,"));
        assert!(csv.lines().last().unwrap().starts_with("aggregate,w2n,"));

        let bad = vec![("other".to_string(), uni(0.0, 1.0)), s[1].clone()];
        assert!(shift_report(&s, &bad, ShiftMetric::W2).is_err());
        assert!(shift_report(&s, &s[..1], ShiftMetric::W2).is_err());
    }

    #[test]
    fn report_aggregate_matches_per_layer_recomputation() {
        let mut rng = CounterRng::new(17);
        let src: Vec<FeatureStats> = (0..3).map(|_| random_stats(&mut rng, 5)).collect();
        let tgt: Vec<FeatureStats> = (0..3).map(|_| random_stats(&mut rng, 5)).collect();
        for metric in ShiftMetric::ALL {
            let r = shift_report(&label_layers(&src), &label_layers(&tgt), metric).unwrap();
            let direct: Vec<f64> = src
                .iter()
                .zip(&tgt)
                .map(|(s, t)| metric.eval(s, t).unwrap())
                .collect();
            let mean = direct.iter().sum::<f64>() / 3.0;
            assert!((r.aggregate - mean).abs() < 1e-12);
        }
    }

    #[test]
    fn metric_names_roundtrip() {
        for m in ShiftMetric::ALL {
            assert_eq!(m.name().parse::<ShiftMetric>().unwrap(), m);
        }
        assert!("wasserstein".parse::<ShiftMetric>().is_err());
    }

    proptest! {
        #[test]
        fn normalized_ratio_identity(
            ms in -5.0..5.0f64, vs in 0.01..10.0f64,
            mt in -5.0..5.0f64, vt in 0.0..10.0f64,
        ) {
            let (s, t) = (uni(ms, vs), uni(mt, vt));
            let w = w2_squared(&s, &t).unwrap();
            let wn = w2_normalized(&s, &t).unwrap();
            prop_assert!((wn * vs - w).abs() <= 1e-10 * w.max(1e-12));
        }

        #[test]
        fn scale_equivariance(
            ms in -5.0..5.0f64, vs in 0.01..10.0f64,
            mt in -5.0..5.0f64, vt in 0.01..10.0f64,
            k in 0.1..10.0f64,
        ) {
            let (s, t) = (uni(ms, vs), uni(mt, vt));
            let (sk, tk) = (uni(k * ms, k * k * vs), uni(k * mt, k * k * vt));
            let w = w2_squared(&s, &t).unwrap();
            prop_assert!((w2_squared(&sk, &tk).unwrap() - k * k * w).abs() <= 1e-10 * (k * k * w).max(1e-12));
            let wn = w2_normalized(&s, &t).unwrap();
            prop_assert!((w2_normalized(&sk, &tk).unwrap() - wn).abs() <= 1e-10 * wn.max(1e-12));
        }

        #[test]
        fn kl_nonnegative(seed in 0u64..100_000) {
            let mut rng = CounterRng::new(seed);
            let p = random_stats(&mut rng, 3);
            let q = random_stats(&mut rng, 3);
            prop_assert!(kl_gauss_diag(&p, &q).unwrap() >= 0.0);
            prop_assert!(kl_gauss_diag(&p, &p).unwrap().abs() <= 1e-12);
            let j1 = jeffrey(&p, &q).unwrap();
            let j2 = jeffrey(&q, &p).unwrap();
            prop_assert_eq!(j1.to_bits(), j2.to_bits());
        }
    }
}
