//! Batch size x pseudo sample size sweeps.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{corruption_seed, fmt6, top1_error};
use crate::corrupt::{apply_corruption, CorruptionSpec};
use crate::data::Dataset;
use crate::error::{invalid, Error, Result};
use crate::nn::{argmax_rows, EvalMode, Network};
use crate::rng::hash2;
use crate::stats::exact_sum;

/// Test batch size `n`: a fixed count or the whole dataset.
/// Serialized as an integer or the string `"full"`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BatchSize {
    Fixed(usize),
    Full,
}

impl BatchSize {
    pub fn resolve(self, len: usize) -> usize {
        match self {
            Self::Fixed(n) => n,
            Self::Full => len,
        }
    }

    fn key(self) -> u64 {
        match self {
            Self::Fixed(n) => n as u64,
            Self::Full => u64::MAX,
        }
    }
}

impl fmt::Display for BatchSize {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Fixed(n) => write!(f, "{n}"),
            Self::Full => f.write_str("full"),
        }
    }
}

impl FromStr for BatchSize {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "full" {
            return Ok(Self::Full);
        }
        match s.parse::<usize>() {
            Ok(n) if n >= 1 => Ok(Self::Fixed(n)),
            _ => Err(invalid(format!(
                "batch size must be a positive integer or `full`, got `{s}`"
            ))),
        }
    }
}

impl Serialize for BatchSize {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Self::Fixed(n) => s.serialize_u64(*n as u64),
            Self::Full => s.serialize_str("full"),
        }
    }
}

impl<'de> Deserialize<'de> for BatchSize {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Int(u64),
            Text(String),
        }
        let text = match Raw::deserialize(d)? {
            Raw::Int(n) => n.to_string(),
            Raw::Text(t) => t,
        };
        text.parse().map_err(serde::de::Error::custom)
    }
}

fn format_pseudo(n: f64) -> String {
    if n.is_infinite() {
        "inf".into()
    } else {
        format!("{n}")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub corruptions: Vec<CorruptionSpec>,
    pub batch_sizes: Vec<BatchSize>,
    /// May contain `f64::INFINITY`.
    pub pseudo_counts: Vec<f64>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepCell {
    pub spec: CorruptionSpec,
    pub batch_size: BatchSize,
    pub pseudo_count: f64,
    /// `None` where the combination is undefined (one sample, no prior).
    pub error: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub config: SweepConfig,
    /// Ordered by corruption, then batch size, then pseudo count.
    pub cells: Vec<SweepCell>,
    /// Error without adaptation, one per corruption.
    pub baseline: Vec<f64>,
}

/// Top-1 error when `data` is shuffled, split into batches of `n`, and each
/// batch is normalized with its own statistics combined with a prior of
/// `pseudo_count` source samples. A trailing batch of one sample joins the
/// previous batch. Returns `None` for `n = 1` without a prior.
pub fn evaluate_batched(
    net: &Network,
    data: &Dataset,
    batch_size: usize,
    pseudo_count: f64,
    shuffle_seed: u64,
) -> Result<Option<f64>> {
    if batch_size == 0 || batch_size > data.len() {
        return Err(invalid(format!(
            "batch size {batch_size} does not fit a dataset of {}",
            data.len()
        )));
    }
    if batch_size == 1 && pseudo_count == 0.0 {
        return Ok(None);
    }
    let order = crate::rng::CounterRng::new(shuffle_seed).permutation(data.len());
    let mut bounds: Vec<(usize, usize)> = (0..data.len())
        .step_by(batch_size)
        .map(|s| (s, (s + batch_size).min(data.len())))
        .collect();
    if batch_size >= 2 && bounds.len() >= 2 && bounds.last().is_some_and(|(s, e)| e - s == 1) {
        let (_, end) = bounds.pop().expect("nonempty");
        bounds.last_mut().expect("nonempty").1 = end;
    }
    let mut wrong = 0usize;
    for (s, e) in bounds {
        let idx = &order[s..e];
        let x = data.features().select(ndarray::Axis(0), idx);
        let pred = argmax_rows(&net.forward_with_prior(x.view(), pseudo_count)?);
        wrong += idx
            .iter()
            .zip(pred)
            .filter(|(&i, p)| data.labels()[i] != *p)
            .count();
    }
    Ok(Some(wrong as f64 / data.len() as f64))
}

/// Runs every (corruption, batch size, pseudo count) cell on corrupted
/// copies of `clean`. Cells run in parallel; results are in grid order.
pub fn sweep(net: &Network, clean: &Dataset, config: &SweepConfig) -> Result<SweepResult> {
    if config.corruptions.is_empty()
        || config.batch_sizes.is_empty()
        || config.pseudo_counts.is_empty()
    {
        return Err(invalid("sweep grids must be nonempty"));
    }
    if let Some(&bad) = config
        .pseudo_counts
        .iter()
        .find(|n| n.is_nan() || **n < 0.0)
    {
        return Err(invalid(format!("pseudo count must be >= 0, got {bad}")));
    }
    for b in &config.batch_sizes {
        if b.resolve(clean.len()) > clean.len() {
            return Err(invalid(format!(
                "batch size {b} exceeds the dataset size {}",
                clean.len()
            )));
        }
    }
    let targets: Vec<(u64, Dataset)> = config
        .corruptions
        .par_iter()
        .map(|spec| {
            let seed = corruption_seed(config.seed, spec);
            (seed, apply_corruption(clean, spec, seed))
        })
        .collect();
    let baseline = targets
        .par_iter()
        .map(|(_, d)| top1_error(net, d, &EvalMode::SourceStats))
        .collect::<Result<Vec<_>>>()?;
    let (nb, np) = (config.batch_sizes.len(), config.pseudo_counts.len());
    let cells = (0..config.corruptions.len() * nb * np)
        .into_par_iter()
        .map(|i| {
            let (c, b, p) = (i / (nb * np), (i / np) % nb, i % np);
            let (seed, data) = &targets[c];
            let batch_size = config.batch_sizes[b];
            let pseudo_count = config.pseudo_counts[p];
            let error = evaluate_batched(
                net,
                data,
                batch_size.resolve(data.len()),
                pseudo_count,
                hash2(*seed, batch_size.key()),
            )?;
            Ok(SweepCell {
                spec: config.corruptions[c],
                batch_size,
                pseudo_count,
                error,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepResult {
        config: config.clone(),
        cells,
        baseline,
    })
}

impl SweepResult {
    fn cell(&self, c: usize, b: usize, p: usize) -> &SweepCell {
        let (nb, np) = (
            self.config.batch_sizes.len(),
            self.config.pseudo_counts.len(),
        );
        &self.cells[(c * nb + b) * np + p]
    }

    pub fn error(&self, corruption: usize, batch: usize, pseudo: usize) -> Option<f64> {
        self.cell(corruption, batch, pseudo).error
    }

    /// Mean error over corruptions for one (batch size, pseudo count).
    pub fn mean_error(&self, batch: usize, pseudo: usize) -> Option<f64> {
        let errs = (0..self.config.corruptions.len())
            .map(|c| self.error(c, batch, pseudo))
            .collect::<Option<Vec<_>>>()?;
        Some(exact_sum(errs.iter().copied()) / errs.len() as f64)
    }

    /// Per family, summed errors over the summed non-adapted errors; mean
    /// over families, in percent.
    pub fn relative_error(&self, batch: usize, pseudo: usize) -> Option<f64> {
        let mut families: Vec<_> = self.config.corruptions.iter().map(|s| s.family).collect();
        families.sort();
        families.dedup();
        let mut ratios = Vec::with_capacity(families.len());
        for family in families {
            let idx: Vec<usize> = (0..self.config.corruptions.len())
                .filter(|&c| self.config.corruptions[c].family == family)
                .collect();
            let model = idx
                .iter()
                .map(|&c| self.error(c, batch, pseudo))
                .collect::<Option<Vec<_>>>()?;
            let base = exact_sum(idx.iter().map(|&c| self.baseline[c]));
            if base <= 0.0 {
                return None;
            }
            ratios.push(exact_sum(model) / base);
        }
        Some(exact_sum(ratios.iter().copied()) / ratios.len() as f64 * 100.0)
    }

    fn table(&self, value: impl Fn(usize, usize) -> Option<f64>) -> String {
        let mut out = String::from("batchsize");
        for &p in &self.config.pseudo_counts {
            out.push('\t');
            out.push_str(&format_pseudo(p));
        }
        out.push('\n');
        for (b, size) in self.config.batch_sizes.iter().enumerate() {
            out.push_str(&size.to_string());
            for p in 0..self.config.pseudo_counts.len() {
                out.push('\t');
                out.push_str(&value(b, p).map_or_else(|| "NA".to_owned(), fmt6));
            }
            out.push('\n');
        }
        out
    }

    /// Mean top-1 error, one row per batch size and one column per pseudo
    /// count.
    pub fn error_tsv(&self) -> String {
        self.table(|b, p| self.mean_error(b, p))
    }

    /// Same layout as [`SweepResult::error_tsv`] with
    /// [`SweepResult::relative_error`] values.
    pub fn mce_tsv(&self) -> String {
        self.table(|b, p| self.relative_error(b, p))
    }

    /// Long format, one row per cell.
    pub fn cells_tsv(&self) -> String {
        let mut out = String::from("corruption\tseverity\tbatchsize\tpseudo\terror\tbaseline\n");
        let (nb, np) = (
            self.config.batch_sizes.len(),
            self.config.pseudo_counts.len(),
        );
        for (i, cell) in self.cells.iter().enumerate() {
            let c = i / (nb * np);
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\t{}\n",
                cell.spec.family,
                cell.spec.severity,
                cell.batch_size,
                format_pseudo(cell.pseudo_count),
                cell.error.map_or_else(|| "NA".to_owned(), fmt6),
                fmt6(self.baseline[c])
            ));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench::ExperimentConfig;
    use crate::corrupt::{CorruptionFamily, SeverityTables};
    use crate::nn::TrainSchedule;

    fn small() -> crate::bench::Experiment {
        ExperimentConfig {
            train_per_class: 150,
            test_per_class: 100,
            schedule: TrainSchedule {
                epochs: 5,
                ..TrainSchedule::default()
            },
            ..ExperimentConfig::default()
        }
        .prepare()
        .unwrap()
    }

    fn config() -> SweepConfig {
        let t = SeverityTables::default();
        SweepConfig {
            corruptions: vec![
                t.spec(CorruptionFamily::Shift, 4).unwrap(),
                t.spec(CorruptionFamily::GaussNoise, 2).unwrap(),
            ],
            batch_sizes: vec![BatchSize::Fixed(1), BatchSize::Fixed(8), BatchSize::Full],
            pseudo_counts: vec![0.0, 16.0, f64::INFINITY],
            seed: 3,
        }
    }

    #[test]
    fn batch_size_parsing() {
        assert_eq!("full".parse::<BatchSize>().unwrap(), BatchSize::Full);
        assert_eq!("8".parse::<BatchSize>().unwrap(), BatchSize::Fixed(8));
        assert!("0".parse::<BatchSize>().is_err());
        assert!("x".parse::<BatchSize>().is_err());
    }

    #[test]
    fn batch_size_serde_accepts_integers_and_full() {
        let v: Vec<BatchSize> = serde_json::from_str(r#"[8, "16", "full"]"#).unwrap();
        assert_eq!(
            v,
            [BatchSize::Fixed(8), BatchSize::Fixed(16), BatchSize::Full]
        );
        assert_eq!(serde_json::to_string(&v).unwrap(), r#"[8,16,"full"]"#);
        assert!(serde_json::from_str::<BatchSize>("0").is_err());
    }

    #[test]
    fn sweep_layout_and_limits() {
        let exp = small();
        let r = sweep(&exp.net, &exp.test, &config()).unwrap();
        assert_eq!(r.cells.len(), 2 * 3 * 3);
        // n = 1 without a prior is undefined
        assert_eq!(r.error(0, 0, 0), None);
        assert!(r.error(0, 0, 1).is_some());
        // infinite prior is the non-adapted baseline
        for c in 0..2 {
            for b in 0..3 {
                assert!((r.error(c, b, 2).unwrap() - r.baseline[c]).abs() <= 1e-9);
            }
        }
        // full batch without prior is full adaptation
        for (c, spec) in r.config.corruptions.iter().enumerate() {
            let data = apply_corruption(&exp.test, spec, corruption_seed(3, spec));
            let mode = exp.net.adapt_full(data.features(), 0.0, None).unwrap();
            let full = top1_error(&exp.net, &data, &mode).unwrap();
            assert_eq!(r.error(c, 2, 0), Some(full));
        }
        let tsv = r.error_tsv();
        let lines: Vec<&str> = tsv.lines().collect();
        assert_eq!(lines[0], "batchsize\t0\t16\tinf");
        assert_eq!(lines.len(), 4);
        assert!(lines.iter().all(|l| l.split('\t').count() == 4));
        assert!(lines[1].starts_with("1\tNA\t"));
        assert!(lines[3].starts_with("full\t"));
        // the infinite-prior column is 100% of the baseline
        assert!(r
            .mce_tsv()
            .lines()
            .nth(2)
            .unwrap()
            .ends_with("\t100.000000"));
    }

    #[test]
    fn sweep_is_deterministic() {
        let exp = small();
        let a = sweep(&exp.net, &exp.test, &config()).unwrap();
        let b = sweep(&exp.net, &exp.test, &config()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.cells_tsv(), b.cells_tsv());
    }

    #[test]
    fn oversized_batches_are_rejected() {
        let exp = small();
        let mut cfg = config();
        cfg.batch_sizes = vec![BatchSize::Fixed(exp.test.len() + 1)];
        assert!(sweep(&exp.net, &exp.test, &cfg).is_err());
        cfg.batch_sizes = vec![BatchSize::Full];
        cfg.pseudo_counts = vec![-1.0];
        assert!(sweep(&exp.net, &exp.test, &cfg).is_err());
    }

    #[test]
    fn trailing_single_sample_joins_previous_batch() {
        let exp = small();
        let data = exp.test.select(&(0..17).collect::<Vec<_>>());
        // 17 = 2 * 8 + 1: without merging the last batch would fail
        assert!(evaluate_batched(&exp.net, &data, 8, 0.0, 1)
            .unwrap()
            .is_some());
    }
}
