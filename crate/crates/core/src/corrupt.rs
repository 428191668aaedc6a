//! Synthetic source data and parametric input corruptions with five
//! severity levels.
//!
//! Corruptions act on features only; labels pass through untouched. The four
//! families are stand-ins for noise / digital / weather style image
//! corruptions: `shift` (brightness-like), `scale` (contrast-like), additive
//! Gaussian noise, and impulse noise. `impulse` is the holdout family.

use std::fmt;
use std::str::FromStr;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{invalid, Error, Result};
use crate::rng::CounterRng;

pub const SEVERITIES: [u8; 5] = [1, 2, 3, 4, 5];

const MIX_STREAM_KEY: u64 = 0x4D49_5845_445F_4331;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CorruptionFamily {
    Shift,
    Scale,
    GaussNoise,
    Impulse,
}

impl CorruptionFamily {
    pub const ALL: [CorruptionFamily; 4] =
        [Self::Shift, Self::Scale, Self::GaussNoise, Self::Impulse];

    /// Family held out for fitting the error predictor.
    pub const HOLDOUT: CorruptionFamily = Self::Impulse;

    pub fn name(self) -> &'static str {
        match self {
            Self::Shift => "shift",
            Self::Scale => "scale",
            Self::GaussNoise => "gauss-noise",
            Self::Impulse => "impulse",
        }
    }

    pub fn is_stochastic(self) -> bool {
        matches!(self, Self::GaussNoise | Self::Impulse)
    }
}

impl fmt::Display for CorruptionFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CorruptionFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| invalid(format!("unknown corruption family `{s}`")))
    }
}

/// Per-family severity parameters, indexed by severity - 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SeverityTables {
    /// Additive offset per coordinate.
    pub shift: [f64; 5],
    /// Multiplicative factor.
    pub scale: [f64; 5],
    /// Standard deviation of the added noise.
    pub gauss_noise: [f64; 5],
    /// Fraction of coordinates replaced.
    pub impulse: [f64; 5],
    /// Replacement values are uniform on `[-impulse_range, impulse_range]`.
    pub impulse_range: f64,
}

impl Default for SeverityTables {
    fn default() -> Self {
        Self {
            shift: [0.5, 1.0, 1.5, 2.0, 2.5],
            scale: [1.25, 1.5, 2.0, 3.0, 4.0],
            gauss_noise: [0.25, 0.5, 1.0, 1.5, 2.0],
            impulse: [0.05, 0.1, 0.2, 0.3, 0.4],
            impulse_range: 6.0,
        }
    }
}

impl SeverityTables {
    pub fn table(&self, family: CorruptionFamily) -> &[f64; 5] {
        match family {
            CorruptionFamily::Shift => &self.shift,
            CorruptionFamily::Scale => &self.scale,
            CorruptionFamily::GaussNoise => &self.gauss_noise,
            CorruptionFamily::Impulse => &self.impulse,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for family in CorruptionFamily::ALL {
            let t = self.table(family);
            if t.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite);
            }
            if !t.windows(2).all(|w| w[0] < w[1]) {
                return Err(invalid(format!(
                    "{family} severity table must be strictly increasing"
                )));
            }
        }
        if self.impulse.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
            return Err(invalid("impulse fractions must lie in [0, 1]"));
        }
        if self.scale[0] <= 0.0 || self.gauss_noise[0] < 0.0 || self.impulse_range <= 0.0 {
            return Err(invalid(
                "scale, noise and impulse range parameters must be positive",
            ));
        }
        Ok(())
    }

    pub fn spec(&self, family: CorruptionFamily, severity: u8) -> Result<CorruptionSpec> {
        CorruptionSpec::new(family, severity, self)
    }
}

/// A family, a severity in `1..=5`, and the parameter it resolves to.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorruptionSpec {
    pub family: CorruptionFamily,
    pub severity: u8,
    pub parameter: f64,
    /// Only used by `impulse`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub range: Option<f64>,
}

impl CorruptionSpec {
    pub fn new(family: CorruptionFamily, severity: u8, tables: &SeverityTables) -> Result<Self> {
        if !(1..=5).contains(&severity) {
            return Err(invalid(format!(
                "severity must be in 1..=5, got {severity}"
            )));
        }
        let parameter = tables.table(family)[severity as usize - 1];
        let range = (family == CorruptionFamily::Impulse).then_some(tables.impulse_range);
        Ok(Self {
            family,
            severity,
            parameter,
            range,
        })
    }

    pub fn label(&self) -> String {
        format!("{}-{}", self.family, self.severity)
    }

    fn corrupt_row(&self, row: &mut [f64], rng: &mut CounterRng) {
        match self.family {
            CorruptionFamily::Shift => row.iter_mut().for_each(|v| *v += self.parameter),
            CorruptionFamily::Scale => row.iter_mut().for_each(|v| *v *= self.parameter),
            CorruptionFamily::GaussNoise => row
                .iter_mut()
                .for_each(|v| *v += self.parameter * rng.standard_normal()),
            CorruptionFamily::Impulse => {
                let range = self
                    .range
                    .unwrap_or(SeverityTables::default().impulse_range);
                for v in row.iter_mut() {
                    let hit = rng.uniform() < self.parameter;
                    let replacement = rng.uniform_range(-range, range);
                    if hit {
                        *v = replacement;
                    }
                }
            }
        }
    }
}

/// Parameters of the Gaussian-mixture source domain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MixtureSpec {
    /// Minimum pairwise distance between class means, in units of the
    /// component standard deviation.
    pub separation: f64,
    /// Component standard deviation.
    pub component_std: f64,
    /// Added to every coordinate of every class mean, so the data are not
    /// centred at the origin.
    pub offset: f64,
}

impl Default for MixtureSpec {
    fn default() -> Self {
        Self {
            separation: 5.0,
            component_std: 1.0,
            offset: 0.0,
        }
    }
}

/// Class means, shifted by `offset` in every coordinate. When
/// `dim >= classes - 1` they form a regular simplex with edge
/// `separation * component_std` in a seeded random orientation; otherwise
/// they are seeded Gaussian draws, centred and rescaled so the closest pair
/// sits exactly that far apart.
pub fn class_means(
    seed: u64,
    classes: usize,
    dim: usize,
    mix: &MixtureSpec,
) -> Result<Array2<f64>> {
    let mut rng = CounterRng::stream(seed, u64::MAX);
    let edge = mix.separation * mix.component_std;
    let mut means = if dim + 1 >= classes {
        regular_simplex(&mut rng, classes, dim, edge)
    } else {
        let mut means = Array2::from_shape_fn((classes, dim), |_| rng.standard_normal());
        let centroid = means.mean_axis(ndarray::Axis(0)).expect("classes >= 2");
        means -= &centroid;
        let mut closest = f64::INFINITY;
        for a in 0..classes {
            for b in a + 1..classes {
                let d = (&means.row(a) - &means.row(b)).mapv(|v| v * v).sum().sqrt();
                closest = closest.min(d);
            }
        }
        if closest.is_nan() || closest <= 1e-9 {
            return Err(invalid("degenerate class means"));
        }
        means *= edge / closest;
        means
    };
    means += mix.offset;
    Ok(means)
}

/// Vertices `e_i - 1/k` of the standard simplex, expressed in a random
/// orthonormal basis of a `(k-1)`-dimensional subspace of `R^dim`.
fn regular_simplex(rng: &mut CounterRng, classes: usize, dim: usize, edge: f64) -> Array2<f64> {
    // orthonormal basis of the sum-zero subspace of R^k (Helmert rows)
    let k = classes;
    let mut helmert = Array2::<f64>::zeros((k - 1, k));
    for r in 0..k - 1 {
        let norm = ((r + 1) * (r + 2)) as f64;
        for c in 0..=r {
            helmert[[r, c]] = 1.0 / norm.sqrt();
        }
        helmert[[r, r + 1]] = -((r + 1) as f64) / norm.sqrt();
    }
    // vertex i has coordinates helmert[:, i]; pairwise distance sqrt(2)
    let coords = helmert.t().to_owned() * (edge / std::f64::consts::SQRT_2);
    // random orthonormal frame: Gram-Schmidt on Gaussian vectors
    let mut frame: Vec<Vec<f64>> = Vec::with_capacity(k - 1);
    while frame.len() < k - 1 {
        let mut v: Vec<f64> = (0..dim).map(|_| rng.standard_normal()).collect();
        for u in &frame {
            let dot: f64 = v.iter().zip(u).map(|(a, b)| a * b).sum();
            v.iter_mut().zip(u).for_each(|(a, b)| *a -= dot * b);
        }
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm > 1e-6 {
            frame.push(v.into_iter().map(|a| a / norm).collect());
        }
    }
    Array2::from_shape_fn((k, dim), |(i, j)| {
        (0..k - 1).map(|r| coords[[i, r]] * frame[r][j]).sum()
    })
}

/// Balanced Gaussian-mixture classification data, `per_class` samples per
/// class, in seeded random order.
pub fn make_dataset(seed: u64, classes: usize, dim: usize, per_class: usize) -> Result<Dataset> {
    make_dataset_with(seed, classes, dim, per_class, &MixtureSpec::default())
}

pub fn make_dataset_with(
    seed: u64,
    classes: usize,
    dim: usize,
    per_class: usize,
    mix: &MixtureSpec,
) -> Result<Dataset> {
    make_split(seed, 0, classes, dim, per_class, mix)
}

/// Independent sample set `split` from the mixture defined by `seed`: all
/// splits share class means, split 0 is [`make_dataset_with`].
pub fn make_split(
    seed: u64,
    split: u64,
    classes: usize,
    dim: usize,
    per_class: usize,
    mix: &MixtureSpec,
) -> Result<Dataset> {
    if classes < 2 || dim == 0 {
        return Err(invalid("make_dataset needs >= 2 classes and >= 1 feature"));
    }
    if classes * per_class < 64 {
        return Err(invalid("make_dataset needs classes * per_class >= 64"));
    }
    if !(mix.separation >= 4.0 && mix.component_std > 0.0) {
        return Err(invalid(
            "mixture separation must be >= 4 component std devs",
        ));
    }
    let means = class_means(seed, classes, dim, mix)?;
    let sample_seed = if split == 0 {
        seed
    } else {
        crate::rng::hash2(seed, split)
    };
    let n = classes * per_class;
    let order = CounterRng::stream(sample_seed, u64::MAX - 1).permutation(n);
    let mut features = Array2::zeros((n, dim));
    let mut labels = vec![0; n];
    for (slot, &k) in order.iter().enumerate() {
        let class = k / per_class;
        let mut rng = CounterRng::stream(sample_seed, k as u64);
        for j in 0..dim {
            features[[slot, j]] = means[[class, j]] + mix.component_std * rng.standard_normal();
        }
        labels[slot] = class;
    }
    Dataset::new(features, labels, classes)
}

/// Applies one corruption to every sample. Sample `i` draws its noise from
/// stream `(seed, i)`.
pub fn apply_corruption(data: &Dataset, spec: &CorruptionSpec, seed: u64) -> Dataset {
    let mut x = data.features().to_owned();
    for (i, mut row) in x.rows_mut().into_iter().enumerate() {
        let mut rng = CounterRng::stream(seed, i as u64);
        spec.corrupt_row(row.as_slice_mut().expect("standard layout"), &mut rng);
    }
    data.with_features(x)
        .expect("corruption keeps values finite")
}

/// Gives each sample an independently drawn spec from `specs`. Returns the
/// corrupted data and the spec index chosen for every sample.
pub fn mixed_corruptions(
    data: &Dataset,
    specs: &[CorruptionSpec],
    seed: u64,
) -> Result<(Dataset, Vec<usize>)> {
    if specs.is_empty() {
        return Err(invalid("mixed_corruptions needs at least one spec"));
    }
    let mut x = data.features().to_owned();
    let mut chosen = Vec::with_capacity(data.len());
    for (i, mut row) in x.rows_mut().into_iter().enumerate() {
        let pick =
            CounterRng::stream(seed ^ MIX_STREAM_KEY, i as u64).below(specs.len() as u64) as usize;
        let mut rng = CounterRng::stream(seed, i as u64);
        specs[pick].corrupt_row(row.as_slice_mut().expect("standard layout"), &mut rng);
        chosen.push(pick);
    }
    Ok((data.with_features(x)?, chosen))
}

/// Sidecar record written next to a corrupted dataset CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorruptionSidecar {
    pub format_version: u32,
    /// `"synthetic stand-in"`: the families are not image corruptions.
    pub kind: String,
    pub specs: Vec<CorruptionSpec>,
    pub mixed: bool,
    pub seed: u64,
}

impl CorruptionSidecar {
    pub fn new(specs: Vec<CorruptionSpec>, mixed: bool, seed: u64) -> Self {
        Self {
            format_version: 1,
            kind: "synthetic stand-in".into(),
            specs,
            mixed,
            seed,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::w2_squared;
    use crate::stats::estimate_stats;

    fn tables() -> SeverityTables {
        SeverityTables::default()
    }

    #[test]
    fn mixture_is_separable_by_true_likelihood_ratio() {
        let ds = make_dataset(1, 2, 2, 500).unwrap();
        let means = class_means(1, 2, 2, &MixtureSpec::default()).unwrap();
        let correct = ds
            .features()
            .rows()
            .into_iter()
            .zip(ds.labels())
            .filter(|(x, &y)| {
                // equal spherical covariances: likelihood ratio = nearest mean
                let d0 = (&means.row(0) - x).mapv(|v| v * v).sum();
                let d1 = (&means.row(1) - x).mapv(|v| v * v).sum();
                (if d0 <= d1 { 0 } else { 1 }) == y
            })
            .count();
        assert!(correct as f64 / ds.len() as f64 >= 0.97);
    }

    #[test]
    fn dataset_is_deterministic_and_balanced() {
        let a = make_dataset(9, 3, 4, 100).unwrap();
        let b = make_dataset(9, 3, 4, 100).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.class_counts(), vec![100, 100, 100]);
        assert!(make_dataset(9, 2, 2, 10).is_err());
        assert!(make_dataset(9, 1, 2, 100).is_err());
    }

    #[test]
    fn class_means_respect_separation() {
        let mix = MixtureSpec {
            separation: 4.0,
            component_std: 1.5,
            offset: 0.0,
        };
        // too few dimensions for a simplex: closest pair is rescaled
        let m = class_means(4, 5, 3, &mix).unwrap();
        let mut closest = f64::INFINITY;
        for a in 0..5 {
            for b in a + 1..5 {
                closest = closest.min((&m.row(a) - &m.row(b)).mapv(|v| v * v).sum().sqrt());
            }
        }
        assert!((closest - 6.0).abs() < 1e-9);
        // simplex: every pair at the same distance, centroid at the offset
        let mix = MixtureSpec { offset: 2.0, ..mix };
        let m = class_means(4, 4, 8, &mix).unwrap();
        for a in 0..4 {
            for b in a + 1..4 {
                let d = (&m.row(a) - &m.row(b)).mapv(|v| v * v).sum().sqrt();
                assert!((d - 6.0).abs() < 1e-9, "{d}");
            }
        }
        let centroid = m.mean_axis(ndarray::Axis(0)).unwrap();
        assert!(centroid.iter().all(|c| (c - 2.0).abs() < 1e-9));
    }

    #[test]
    fn shift_and_scale_tables() {
        let ds = make_dataset(2, 2, 3, 200).unwrap();
        for s in SEVERITIES {
            let spec = tables().spec(CorruptionFamily::Shift, s).unwrap();
            assert_eq!(spec.parameter, 0.5 * s as f64);
            let out = apply_corruption(&ds, &spec, 0);
            let diff = &out.features() - &ds.features();
            assert!(diff.iter().all(|d| (d - spec.parameter).abs() < 1e-12));
        }
        assert!(tables().spec(CorruptionFamily::Shift, 0).is_err());
        assert!(tables().spec(CorruptionFamily::Shift, 6).is_err());

        let before = estimate_stats(ds.features()).unwrap();
        for (s, k) in SEVERITIES.into_iter().zip([1.25, 1.5, 2.0, 3.0, 4.0]) {
            let spec = tables().spec(CorruptionFamily::Scale, s).unwrap();
            assert_eq!(spec.parameter, k);
            let after = estimate_stats(apply_corruption(&ds, &spec, 0).features()).unwrap();
            for j in 0..3 {
                assert!((after.mean()[j] - k * before.mean()[j]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn gauss_noise_adds_variance() {
        let ds = make_dataset(3, 2, 2, 5000).unwrap();
        let before = estimate_stats(ds.features()).unwrap();
        for (s, sigma) in SEVERITIES.into_iter().zip([0.25, 0.5, 1.0, 1.5, 2.0]) {
            let spec = tables().spec(CorruptionFamily::GaussNoise, s).unwrap();
            let after = estimate_stats(apply_corruption(&ds, &spec, 77).features()).unwrap();
            for j in 0..2 {
                let expected = before.variance()[j] + sigma * sigma;
                // sampling error of a variance estimate at n = 1e4
                let tol = 4.0 * expected * (2.0 / ds.len() as f64).sqrt();
                assert!((after.variance()[j] - expected).abs() < tol, "s={s} j={j}");
            }
        }
    }

    #[test]
    fn labels_never_change_and_seeds_matter_only_for_stochastic() {
        let ds = make_dataset(4, 3, 2, 100).unwrap();
        for family in CorruptionFamily::ALL {
            for s in SEVERITIES {
                let spec = tables().spec(family, s).unwrap();
                let a = apply_corruption(&ds, &spec, 1);
                let b = apply_corruption(&ds, &spec, 1);
                let c = apply_corruption(&ds, &spec, 2);
                assert_eq!(a.labels(), ds.labels());
                assert_eq!(a, b);
                assert_eq!(a == c, !family.is_stochastic(), "{family}");
            }
        }
    }

    #[test]
    fn severity_increases_input_shift() {
        let ds = make_dataset(5, 2, 2, 5000).unwrap();
        let clean = estimate_stats(ds.features()).unwrap();
        for family in CorruptionFamily::ALL {
            let mut prev = 0.0;
            for s in SEVERITIES {
                let spec = tables().spec(family, s).unwrap();
                let st = estimate_stats(apply_corruption(&ds, &spec, 8).features()).unwrap();
                let w = w2_squared(&clean, &st).unwrap();
                assert!(w > prev, "{family} severity {s}: {w} <= {prev}");
                prev = w;
            }
        }
    }

    #[test]
    fn mixed_single_spec_equals_apply() {
        let ds = make_dataset(6, 2, 3, 50).unwrap();
        let spec = tables().spec(CorruptionFamily::Impulse, 3).unwrap();
        let (mixed, picks) = mixed_corruptions(&ds, &[spec], 11).unwrap();
        assert_eq!(mixed, apply_corruption(&ds, &spec, 11));
        assert!(picks.iter().all(|&p| p == 0));
        assert!(mixed_corruptions(&ds, &[], 11).is_err());
    }

    #[test]
    fn mixed_frequencies_are_balanced() {
        let ds = make_dataset(7, 2, 2, 5000).unwrap();
        let specs = [
            tables().spec(CorruptionFamily::Shift, 2).unwrap(),
            tables().spec(CorruptionFamily::GaussNoise, 4).unwrap(),
        ];
        let (a, picks) = mixed_corruptions(&ds, &specs, 5).unwrap();
        let n = picks.len() as f64;
        let ones = picks.iter().filter(|&&p| p == 1).count() as f64;
        assert!((ones - n / 2.0).abs() <= 3.0 * (n * 0.25).sqrt());
        let (b, _) = mixed_corruptions(&ds, &specs, 5).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn tables_validate() {
        assert!(tables().validate().is_ok());
        let mut t = tables();
        t.shift = [1.0, 0.5, 1.5, 2.0, 2.5];
        assert!(t.validate().is_err());
    }

    #[test]
    fn sidecar_json() {
        let spec = tables().spec(CorruptionFamily::Impulse, 2).unwrap();
        let side = CorruptionSidecar::new(vec![spec], false, 3);
        let text = serde_json::to_string(&side).unwrap();
        assert!(text.contains("\"family\":\"impulse\""));
        assert_eq!(
            serde_json::from_str::<CorruptionSidecar>(&text).unwrap(),
            side
        );
    }
}
