//! Closed-form lower and upper bounds on the expected squared Wasserstein
//! distance between the true target statistics and the prior-weighted
//! combination of source and estimated target statistics, together with a
//! Monte-Carlo estimate of that expectation.
//!
//! For target samples `x_j ~ N(mu_t, var_t)`, `j = 1..n`, the combined
//! statistics are `mean = w_s mu_s + w_t mu_hat`, `var = w_s var_s + w_t var_hat`
//! with `w_s = N/(N+n)`. The lower bound follows from Jensen's inequality for
//! `E[sqrt(var)]`; the upper bound adds a Hölder defect term that is valid
//! while `var` stays in `[a, b]`, which holds with probability `1 - alpha`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::rng::CounterRng;
use crate::special::chi2_quantile;
use crate::stats::FeatureStats;

pub const DEFAULT_ALPHA: f64 = 0.05;
pub const MIN_TRIALS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundInput {
    pub mu_s: f64,
    pub var_s: f64,
    pub mu_t: f64,
    pub var_t: f64,
    /// Number of target samples.
    pub n: u64,
    /// Pseudo sample size of the source prior.
    pub pseudo_n: f64,
    pub alpha: f64,
}

impl BoundInput {
    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.mu_s,
            self.var_s,
            self.mu_t,
            self.var_t,
            self.pseudo_n,
            self.alpha,
        ];
        if finite.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        if self.var_s <= 0.0 || self.var_t <= 0.0 {
            return Err(invalid("bound input variances must be > 0"));
        }
        if self.n < 2 {
            return Err(invalid("bound input needs n >= 2"));
        }
        if self.n - 1 > u32::MAX as u64 {
            return Err(invalid("bound input n too large"));
        }
        if self.pseudo_n < 0.0 {
            return Err(invalid("pseudo sample size N must be >= 0"));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(invalid("alpha must lie in (0, 1)"));
        }
        Ok(())
    }

    pub fn with_pseudo_n(self, pseudo_n: f64) -> Self {
        Self { pseudo_n, ..self }
    }

    fn weights(&self) -> (f64, f64, f64) {
        let total = self.pseudo_n + self.n as f64;
        (self.pseudo_n / total, self.n as f64 / total, total)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundResult {
    pub lower: f64,
    pub upper: f64,
    /// `upper - lower`, kept separately to avoid cancellation.
    pub defect: f64,
    /// Range of the combined variance at confidence `1 - alpha`.
    pub interval_a: f64,
    pub interval_b: f64,
    /// Bound on the curvature of the square root on `[a, b]`: `a^(-3/2) / 4`.
    pub holder_m: f64,
}

/// Evaluates both bounds and the interval quantities.
pub fn compute_bounds(inp: &BoundInput) -> Result<BoundResult> {
    inp.validate()?;
    let lower = lower_bound(inp);
    let df = (inp.n - 1) as u32;
    let lo_q = chi2_quantile(inp.alpha / 2.0, df)?;
    let hi_q = chi2_quantile(1.0 - inp.alpha / 2.0, df)?;
    let (ws, _, total) = inp.weights();
    let prior = ws * inp.var_s;
    let interval_a = prior + lo_q * inp.var_t / total;
    let interval_b = prior + hi_q * inp.var_t / total;
    let holder_m = 0.25 * interval_a.powf(-1.5);
    let sigma_t = inp.var_t.sqrt();
    let defect =
        sigma_t.powi(5) * (inp.n - 1) as f64 / (2.0 * total * total) * interval_a.powf(-1.5);
    Ok(BoundResult {
        lower,
        upper: lower + defect,
        defect,
        interval_a,
        interval_b,
        holder_m,
    })
}

fn lower_bound(inp: &BoundInput) -> f64 {
    let (ws, _, total) = inp.weights();
    let n = inp.n as f64;
    let sigma_t = inp.var_t.sqrt();
    let expected_var = ws * inp.var_s + (n - 1.0) / total * inp.var_t;
    // (sigma_t - sqrt(E))^2 written without cancellation
    let gap = (inp.var_t - expected_var) / (sigma_t + expected_var.sqrt());
    let dm = inp.mu_t - inp.mu_s;
    gap * gap + ws * ws * dm * dm + n / (total * total) * inp.var_t
}

pub fn bound_l(inp: &BoundInput) -> Result<f64> {
    inp.validate()?;
    Ok(lower_bound(inp))
}

pub fn bound_u(inp: &BoundInput) -> Result<f64> {
    Ok(compute_bounds(inp)?.upper)
}

/// Lower bound when source and target statistics coincide (`sigma = sigma_t`).
pub fn lower_bound_source_equals_target(var: f64, n: u64, pseudo_n: f64) -> f64 {
    let (nn, big) = (n as f64, pseudo_n);
    let total = big + nn;
    var * ((2.0 * big * big + 4.0 * big * nn - big + 2.0 * nn * nn) / (total * total)
        - 2.0 * (1.0 - 1.0 / total).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub mean: f64,
    pub std_error: f64,
}

/// Monte-Carlo estimate of `E[W2^2]` by sampling the sample moments directly:
/// `mu_hat ~ N(mu_t, var_t/n)` and `var_hat ~ (var_t/n) χ²(n-1)`.
pub fn mc_expected_w2(inp: &BoundInput, trials: usize, seed: u64) -> Result<McEstimate> {
    inp.validate()?;
    if trials < MIN_TRIALS {
        return Err(invalid(format!(
            "mc_expected_w2 needs >= {MIN_TRIALS} trials, got {trials}"
        )));
    }
    let (ws, wt, _) = inp.weights();
    let n = inp.n as f64;
    let sigma_t = inp.var_t.sqrt();
    let mean_sd = sigma_t / n.sqrt();
    let df = n - 1.0;
    let mut rng = CounterRng::new(seed);
    let mut mean = 0.0;
    let mut m2 = 0.0;
    for k in 0..trials {
        let mu_hat = rng.normal(inp.mu_t, mean_sd);
        let var_hat = inp.var_t / n * rng.chi_square(df);
        let mu_bar = ws * inp.mu_s + wt * mu_hat;
        let var_bar = ws * inp.var_s + wt * var_hat;
        let ds = var_bar.sqrt() - sigma_t;
        let dm = mu_bar - inp.mu_t;
        let w2 = ds * ds + dm * dm;
        let delta = w2 - mean;
        mean += delta / (k + 1) as f64;
        m2 += delta * (w2 - mean);
    }
    let var = m2 / (trials - 1) as f64;
    Ok(McEstimate {
        mean,
        std_error: (var / trials as f64).sqrt(),
    })
}

/// Sums the univariate bounds over independent coordinates. Returns
/// `(lower_total, upper_total)`.
pub fn bounds_multivariate(
    src: &FeatureStats,
    tgt: &FeatureStats,
    n: u64,
    pseudo_n: f64,
    alpha: f64,
) -> Result<(f64, f64)> {
    multivariate(src, tgt, n, pseudo_n, alpha, false)
}

/// As [`bounds_multivariate`] for the source-normalized distance: every
/// coordinate's bounds are divided by its source variance.
pub fn bounds_multivariate_normalized(
    src: &FeatureStats,
    tgt: &FeatureStats,
    n: u64,
    pseudo_n: f64,
    alpha: f64,
) -> Result<(f64, f64)> {
    multivariate(src, tgt, n, pseudo_n, alpha, true)
}

fn multivariate(
    src: &FeatureStats,
    tgt: &FeatureStats,
    n: u64,
    pseudo_n: f64,
    alpha: f64,
    normalized: bool,
) -> Result<(f64, f64)> {
    src.require_same_dim(tgt)?;
    let (mut lo, mut hi) = (0.0, 0.0);
    for i in 0..src.dim() {
        let inp = BoundInput {
            mu_s: src.mean()[i],
            var_s: src.variance()[i],
            mu_t: tgt.mean()[i],
            var_t: tgt.variance()[i],
            n,
            pseudo_n,
            alpha,
        };
        let r = compute_bounds(&inp)?;
        let scale = if normalized { 1.0 / inp.var_s } else { 1.0 };
        lo += r.lower * scale;
        hi += r.upper * scale;
    }
    Ok((lo, hi))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Objective {
    Lower,
    Upper,
}

/// Grid search for the pseudo sample size minimizing a bound. Ties go to the
/// smaller `N`. Returns the best `N` and the objective at every grid point, in
/// grid order.
pub fn optimal_n(base: &BoundInput, grid: &[f64], objective: Objective) -> Result<(f64, Vec<f64>)> {
    if grid.is_empty() {
        return Err(invalid("optimal_n needs a nonempty grid"));
    }
    let mut values = Vec::with_capacity(grid.len());
    let mut best: Option<(f64, f64)> = None;
    for &big in grid {
        let inp = base.with_pseudo_n(big);
        let v = match objective {
            Objective::Lower => bound_l(&inp)?,
            Objective::Upper => bound_u(&inp)?,
        };
        values.push(v);
        best = match best {
            Some((bn, bv)) if bv < v || (bv == v && bn <= big) => Some((bn, bv)),
            _ => Some((big, v)),
        };
    }
    Ok((best.map(|b| b.0).unwrap_or(0.0), values))
}

/// Powers of two `2^0 .. 2^10`.
pub fn default_pseudo_grid() -> Vec<f64> {
    (0..=10).map(|k| (1u32 << k) as f64).collect()
}

/// One cell of the bound-verification grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SandwichRow {
    pub input: BoundInput,
    pub bounds: BoundResult,
    pub mc: McEstimate,
    pub contained: bool,
}

impl SandwichRow {
    pub const CSV_HEADER: &'static str =
        "mu_shift,var_ratio,n,N,alpha,L,U,mc_estimate,mc_se,contained";

    pub fn csv_line(&self) -> String {
        let i = &self.input;
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            i.mu_t - i.mu_s,
            i.var_t / i.var_s,
            i.n,
            i.pseudo_n,
            i.alpha,
            self.bounds.lower,
            self.bounds.upper,
            self.mc.mean,
            self.mc.std_error,
            self.contained
        )
    }
}

/// Parameter axes of the verification grid; the source is fixed at `N(0, 1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SandwichGrid {
    pub mean_shifts: Vec<f64>,
    pub std_ratios: Vec<f64>,
    pub sample_sizes: Vec<u64>,
    pub pseudo_sizes: Vec<f64>,
    pub alpha: f64,
}

impl Default for SandwichGrid {
    fn default() -> Self {
        Self {
            mean_shifts: vec![0.0, 0.5, 1.0, 2.0, 4.0],
            std_ratios: vec![0.5, 0.8, 1.0, 1.25, 2.0],
            sample_sizes: vec![2, 8, 32, 128, 512],
            pseudo_sizes: vec![0.0, 8.0, 64.0, 512.0],
            alpha: DEFAULT_ALPHA,
        }
    }
}

impl SandwichGrid {
    pub fn cells(&self) -> Vec<BoundInput> {
        let mut out = Vec::new();
        for &shift in &self.mean_shifts {
            for &ratio in &self.std_ratios {
                for &n in &self.sample_sizes {
                    for &big in &self.pseudo_sizes {
                        out.push(BoundInput {
                            mu_s: 0.0,
                            var_s: 1.0,
                            mu_t: shift,
                            var_t: ratio * ratio,
                            n,
                            pseudo_n: big,
                            alpha: self.alpha,
                        });
                    }
                }
            }
        }
        out
    }
}

/// Checks `L - 3 se <= E_mc <= U + 3 se` for one cell.
pub fn verify_cell(inp: &BoundInput, trials: usize, seed: u64) -> Result<SandwichRow> {
    let bounds = compute_bounds(inp)?;
    let mc = mc_expected_w2(inp, trials, seed)?;
    let slack = 3.0 * mc.std_error;
    let contained = mc.mean >= bounds.lower - slack && mc.mean <= bounds.upper + slack;
    Ok(SandwichRow {
        input: *inp,
        bounds,
        mc,
        contained,
    })
}

/// Verifies every cell, in parallel, with per-cell seeds `seed ^ index`.
/// Rows come back in grid order.
pub fn verify_grid(cells: &[BoundInput], trials: usize, seed: u64) -> Result<Vec<SandwichRow>> {
    cells
        .par_iter()
        .enumerate()
        .map(|(i, c)| verify_cell(c, trials, seed ^ i as u64))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> BoundInput {
        BoundInput {
            mu_s: 0.0,
            var_s: 1.0,
            mu_t: 0.0,
            var_t: 1.0,
            n: 8,
            pseudo_n: 8.0,
            alpha: 0.05,
        }
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1e-300)
    }

    #[test]
    fn large_n_limit() {
        for &big in &[0.0, 8.0, 512.0] {
            let inp = BoundInput {
                mu_t: 2.0,
                var_t: 1.5625,
                n: 1_000_000_000,
                pseudo_n: big,
                ..base()
            };
            let r = compute_bounds(&inp).unwrap();
            assert!(r.lower < 1e-6, "L = {}", r.lower);
            assert!(r.upper < 1e-5, "U = {}", r.upper);
        }
    }

    #[test]
    fn large_pseudo_limit_is_source_target_distance() {
        let inp = BoundInput {
            mu_t: 1.5,
            var_t: 4.0,
            n: 32,
            ..base()
        };
        let inp = inp.with_pseudo_n(1e12 * 32.0);
        let w2 = (2.0f64 - 1.0).powi(2) + 1.5f64.powi(2);
        assert!(rel(bound_l(&inp).unwrap(), w2) < 1e-6);
    }

    #[test]
    fn source_equals_target_closed_form() {
        let mut rng = CounterRng::new(20);
        for _ in 0..20 {
            let var = rng.uniform_range(0.1, 5.0);
            let mu = rng.uniform_range(-3.0, 3.0);
            let n = 2 + rng.below(510);
            let big = rng.uniform_range(0.0, 512.0);
            let inp = BoundInput {
                mu_s: mu,
                var_s: var,
                mu_t: mu,
                var_t: var,
                n,
                pseudo_n: big,
                alpha: 0.05,
            };
            let closed = lower_bound_source_equals_target(var, n, big);
            assert!(rel(closed, bound_l(&inp).unwrap()) < 1e-10, "n={n} N={big}");
        }
    }

    #[test]
    fn defect_matches_hand_assembly() {
        let r = compute_bounds(&base()).unwrap();
        let q = chi2_quantile(0.025, 7).unwrap();
        let a = (8.0 + q) / 16.0;
        assert!(rel(r.interval_a, a) < 1e-14);
        let expected = 7.0 / (2.0 * 256.0) * a.powf(-1.5);
        assert!(rel(r.upper - r.lower, expected) < 1e-10);
        assert!(rel(r.defect, expected) < 1e-14);
        assert!(rel(r.holder_m, 0.25 * a.powf(-1.5)) < 1e-14);
        assert!(r.interval_a > 0.0 && r.interval_a <= r.interval_b);
    }

    #[test]
    fn smaller_alpha_widens_upper_bound() {
        let mut prev: Option<BoundResult> = None;
        for &alpha in &[0.2, 0.1, 0.05, 0.01] {
            let r = compute_bounds(&BoundInput { alpha, ..base() }).unwrap();
            if let Some(p) = prev {
                assert!(r.interval_a < p.interval_a);
                assert!(r.upper > p.upper);
                assert_eq!(r.lower, p.lower);
            }
            prev = Some(r);
        }
    }

    /// Exact `E[W2^2]` without a prior (`N = 0`): the mean term is
    /// `var/n`, and `E[sigma_hat] = sigma sqrt(2/n) Γ(n/2) / Γ((n-1)/2)`.
    fn expected_w2_without_prior(var: f64, n: u64) -> f64 {
        use crate::special::ln_gamma;
        let nf = n as f64;
        let e_sigma_hat = var.sqrt()
            * (2.0 / nf).sqrt()
            * (ln_gamma(0.5 * nf) - ln_gamma(0.5 * (nf - 1.0))).exp();
        var / nf + var * (nf - 1.0) / nf - 2.0 * var.sqrt() * e_sigma_hat + var
    }

    #[test]
    fn mc_small_sample_noise_limit() {
        let n = 10_000u64;
        let inp = BoundInput {
            n,
            pseudo_n: 0.0,
            mu_t: 0.3,
            mu_s: 0.3,
            var_s: 2.0,
            var_t: 2.0,
            alpha: 0.05,
        };
        let mc = mc_expected_w2(&inp, 100_000, 7).unwrap();
        let exact = expected_w2_without_prior(2.0, n);
        assert!(
            (mc.mean - exact).abs() < 3.0 * mc.std_error,
            "{mc:?} vs {exact}"
        );
        // E[W2^2] ~ 1.5 var / n, of which L accounts for var / n
        assert!((exact / (1.5 * 2.0 / n as f64) - 1.0).abs() < 1e-3);
        let l = bound_l(&inp).unwrap();
        assert!((l - 2.0 * 2.0 * (1.0 - (1.0 - 1.0 / n as f64).sqrt())).abs() < 1e-15);
        let r = compute_bounds(&inp).unwrap();
        assert!(r.lower <= exact && exact <= r.upper);
    }

    #[test]
    fn mc_is_deterministic_and_sandwiched() {
        let inp = BoundInput {
            mu_t: 1.0,
            var_t: 1.5,
            n: 8,
            pseudo_n: 16.0,
            ..base()
        };
        let a = mc_expected_w2(&inp, 20_000, 3).unwrap();
        let b = mc_expected_w2(&inp, 20_000, 3).unwrap();
        assert_eq!(a.mean.to_bits(), b.mean.to_bits());
        let r = compute_bounds(&inp).unwrap();
        assert!(a.mean >= r.lower - 3.0 * a.std_error && a.mean <= r.upper + 3.0 * a.std_error);
        assert!(mc_expected_w2(&inp, 9_999, 3).is_err());
    }

    #[test]
    fn multivariate_sums_coordinates() {
        let one = FeatureStats::scalar(0.0, 1.0, 1.0).unwrap();
        let one_t = FeatureStats::scalar(1.0, 2.0, 1.0).unwrap();
        let (l1, u1) = bounds_multivariate(&one, &one_t, 16, 4.0, 0.05).unwrap();
        let three = FeatureStats::new(vec![0.0; 3], vec![1.0; 3], 1.0).unwrap();
        let three_t = FeatureStats::new(vec![1.0; 3], vec![2.0; 3], 1.0).unwrap();
        let (l3, u3) = bounds_multivariate(&three, &three_t, 16, 4.0, 0.05).unwrap();
        assert!(rel(l3, 3.0 * l1) < 1e-15 && rel(u3, 3.0 * u1) < 1e-15);

        let s = FeatureStats::new(vec![0.0, 2.0], vec![1.0, 3.0], 1.0).unwrap();
        let t = FeatureStats::new(vec![0.5, 1.0], vec![0.7, 5.0], 1.0).unwrap();
        let (l, u) = bounds_multivariate(&s, &t, 8, 2.0, 0.05).unwrap();
        let c0 = compute_bounds(&BoundInput {
            mu_s: 0.0,
            var_s: 1.0,
            mu_t: 0.5,
            var_t: 0.7,
            n: 8,
            pseudo_n: 2.0,
            alpha: 0.05,
        })
        .unwrap();
        let c1 = compute_bounds(&BoundInput {
            mu_s: 2.0,
            var_s: 3.0,
            mu_t: 1.0,
            var_t: 5.0,
            n: 8,
            pseudo_n: 2.0,
            alpha: 0.05,
        })
        .unwrap();
        assert!(rel(l, c0.lower + c1.lower) < 1e-14);
        assert!(rel(u, c0.upper + c1.upper) < 1e-14);

        let mismatch = FeatureStats::scalar(0.0, 1.0, 1.0).unwrap();
        assert!(bounds_multivariate(&s, &mismatch, 8, 2.0, 0.05).is_err());
    }

    #[test]
    fn normalized_bounds_scale_by_source_variance() {
        let s = FeatureStats::new(vec![0.3, -1.0], vec![2.5, 0.4], 1.0).unwrap();
        let t = FeatureStats::new(vec![1.1, 0.2], vec![1.7, 0.9], 1.0).unwrap();
        let (ln, un) = bounds_multivariate_normalized(&s, &t, 32, 8.0, 0.05).unwrap();
        // whiten inputs by the source scale per coordinate
        let sd: Vec<f64> = s.std_dev();
        let ws = FeatureStats::new(
            s.mean().iter().zip(&sd).map(|(m, d)| m / d).collect(),
            vec![1.0, 1.0],
            1.0,
        )
        .unwrap();
        let wt = FeatureStats::new(
            t.mean().iter().zip(&sd).map(|(m, d)| m / d).collect(),
            t.variance()
                .iter()
                .zip(s.variance())
                .map(|(v, vs)| v / vs)
                .collect(),
            1.0,
        )
        .unwrap();
        let (lw, uw) = bounds_multivariate(&ws, &wt, 32, 8.0, 0.05).unwrap();
        assert!(rel(ln, lw) < 1e-10);
        assert!(rel(un, uw) < 1e-10);
    }

    #[test]
    fn optimal_n_cases() {
        let grid: Vec<f64> = (0..=256).map(f64::from).collect();
        // no shift: more prior never hurts
        let (best, values) =
            optimal_n(&BoundInput { n: 8, ..base() }, &grid, Objective::Lower).unwrap();
        assert_eq!(best, 256.0);
        assert!(values.windows(2).all(|w| w[1] <= w[0]));
        let (best, _) = optimal_n(&BoundInput { n: 8, ..base() }, &grid, Objective::Upper).unwrap();
        assert_eq!(best, 256.0);

        let far = BoundInput {
            mu_t: 100.0,
            n: 32,
            ..base()
        };
        assert_eq!(optimal_n(&far, &grid, Objective::Lower).unwrap().0, 0.0);
        assert_eq!(optimal_n(&far, &grid, Objective::Upper).unwrap().0, 0.0);

        let moderate = BoundInput {
            mu_t: 1.0,
            n: 8,
            ..base()
        };
        for obj in [Objective::Lower, Objective::Upper] {
            let (best, values) = optimal_n(&moderate, &grid, obj).unwrap();
            let mut brute = (0.0, f64::INFINITY);
            for &g in &grid {
                let inp = moderate.with_pseudo_n(g);
                let v = match obj {
                    Objective::Lower => bound_l(&inp).unwrap(),
                    Objective::Upper => bound_u(&inp).unwrap(),
                };
                if v < brute.1 {
                    brute = (g, v);
                }
            }
            assert_eq!(best, brute.0);
            assert_eq!(values.len(), grid.len());
        }
        assert!(optimal_n(&moderate, &[], Objective::Lower).is_err());
    }

    #[test]
    fn ties_prefer_smaller_n() {
        let inp = BoundInput {
            mu_t: 1.0,
            n: 8,
            ..base()
        };
        let (best, _) = optimal_n(&inp, &[4.0, 2.0, 4.0, 2.0], Objective::Lower).unwrap();
        let l2 = bound_l(&inp.with_pseudo_n(2.0)).unwrap();
        let l4 = bound_l(&inp.with_pseudo_n(4.0)).unwrap();
        assert_eq!(best, if l4 < l2 { 4.0 } else { 2.0 });
    }

    #[test]
    fn defect_shrinks_with_n() {
        // (n-1)/(N+n)^2 falls once n > N + 2; without a prior it falls for all n >= 2.
        for &big in &[0.0, 8.0, 64.0] {
            let mut prev = f64::INFINITY;
            for &n in &[2u64, 8, 32, 128, 512, 2048] {
                let r = compute_bounds(&BoundInput {
                    n,
                    pseudo_n: big,
                    mu_t: 1.0,
                    var_t: 2.0,
                    ..base()
                })
                .unwrap();
                assert!(r.upper >= r.lower);
                if (n as f64) > big + 2.0 {
                    assert!(r.defect < prev, "N={big} n={n}");
                }
                prev = r.defect;
            }
        }
    }

    #[test]
    fn rejects_invalid_input() {
        assert!(compute_bounds(&BoundInput { n: 1, ..base() }).is_err());
        assert!(compute_bounds(&BoundInput {
            var_t: 0.0,
            ..base()
        })
        .is_err());
        assert!(compute_bounds(&BoundInput {
            alpha: 1.0,
            ..base()
        })
        .is_err());
        assert!(compute_bounds(&BoundInput {
            pseudo_n: -1.0,
            ..base()
        })
        .is_err());
    }
}
