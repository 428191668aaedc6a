//! Error tables and the mean corruption error.

use std::collections::HashSet;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::stats::exact_sum;

/// Baseline top-1 errors of AlexNet on the 15 ImageNet-C test corruptions,
/// averaged over severities.
pub const ALEXNET_TEST_CSV: &str = include_str!("../../fixtures/alexnet_imagenet_c.csv");

/// Same for the four holdout corruptions.
pub const ALEXNET_HOLDOUT_CSV: &str = include_str!("../../fixtures/alexnet_imagenet_c_holdout.csv");

pub const ERROR_TABLE_HEADER: &str = "corruption,severity,error";

/// Top-1 errors of one corruption.
#[derive(Debug, Clone, PartialEq)]
pub enum CorruptionErrors {
    /// Severities 1 through 5.
    PerSeverity([f64; 5]),
    /// Only the mean over the five severities is known.
    Mean(f64),
}

impl CorruptionErrors {
    fn values(&self) -> &[f64] {
        match self {
            Self::PerSeverity(v) => v,
            Self::Mean(m) => std::slice::from_ref(m),
        }
    }

    fn mean(&self) -> f64 {
        exact_sum(self.values().iter().copied()) / self.values().len() as f64
    }
}

/// Ordered map from corruption label to its errors.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ErrorTable {
    rows: Vec<(String, CorruptionErrors)>,
}

impl ErrorTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, label: impl Into<String>, errors: CorruptionErrors) -> Result<()> {
        let label = label.into();
        if label.is_empty() || label.contains([',', '\n', '"']) {
            return Err(Error::Format(format!("invalid corruption label `{label}`")));
        }
        if let Some(&bad) = errors.values().iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Format(format!(
                "{label}: error {bad} outside [0, 1]"
            )));
        }
        if self.get(&label).is_some() {
            return Err(Error::Format(format!("duplicate corruption `{label}`")));
        }
        self.rows.push((label, errors));
        Ok(())
    }

    pub fn get(&self, label: &str) -> Option<&CorruptionErrors> {
        self.rows.iter().find(|(l, _)| l == label).map(|(_, e)| e)
    }

    pub fn labels(&self) -> impl Iterator<Item = &str> {
        self.rows.iter().map(|(l, _)| l.as_str())
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Every error multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        let mut out = Self::new();
        for (label, errors) in &self.rows {
            let e = match errors {
                CorruptionErrors::PerSeverity(v) => {
                    CorruptionErrors::PerSeverity(v.map(|x| x * factor))
                }
                CorruptionErrors::Mean(m) => CorruptionErrors::Mean(m * factor),
            };
            out.insert(label.clone(), e)?;
        }
        Ok(out)
    }

    pub fn alexnet() -> Self {
        Self::read_csv(ALEXNET_TEST_CSV.as_bytes()).expect("shipped fixture parses")
    }

    pub fn alexnet_holdout() -> Self {
        Self::read_csv(ALEXNET_HOLDOUT_CSV.as_bytes()).expect("shipped fixture parses")
    }

    /// Reads `corruption,severity,error` rows. Each corruption has either
    /// rows for severities 1 to 5 or a single `avg` row.
    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_reader(input);
        let header: Vec<String> = reader.headers()?.iter().map(str::to_owned).collect();
        if header.join(",") != ERROR_TABLE_HEADER {
            return Err(Error::Format(format!(
                "expected header `{ERROR_TABLE_HEADER}`"
            )));
        }
        let mut order: Vec<String> = Vec::new();
        let mut cells: Vec<[Option<f64>; 5]> = Vec::new();
        let mut means: Vec<Option<f64>> = Vec::new();
        for record in reader.records() {
            let record = record?;
            if record.len() != 3 {
                return Err(Error::Format(format!(
                    "expected 3 fields, got {}",
                    record.len()
                )));
            }
            let (label, sev, err) = (&record[0], &record[1], &record[2]);
            let value: f64 = err
                .parse()
                .map_err(|_| Error::Format(format!("{label},{sev}: bad error value `{err}`")))?;
            let idx = match order.iter().position(|l| l == label) {
                Some(i) => i,
                None => {
                    order.push(label.to_owned());
                    cells.push([None; 5]);
                    means.push(None);
                    order.len() - 1
                }
            };
            let slot = if sev == "avg" {
                &mut means[idx]
            } else {
                match sev.parse::<usize>() {
                    Ok(s @ 1..=5) => &mut cells[idx][s - 1],
                    _ => return Err(Error::Format(format!("{label}: bad severity `{sev}`"))),
                }
            };
            if slot.replace(value).is_some() {
                return Err(Error::Format(format!("duplicate row {label},{sev}")));
            }
        }
        let mut table = Self::new();
        for ((label, cell), mean) in order.into_iter().zip(cells).zip(means) {
            let present = cell.iter().filter(|c| c.is_some()).count();
            let errors = match (mean, present) {
                (Some(m), 0) => CorruptionErrors::Mean(m),
                (None, 5) => CorruptionErrors::PerSeverity(cell.map(|c| c.expect("all present"))),
                (Some(_), _) => {
                    return Err(Error::Format(format!(
                        "{label}: mixes `avg` with per-severity rows"
                    )))
                }
                (None, _) => {
                    let missing = cell.iter().position(Option::is_none).expect("some missing") + 1;
                    return Err(Error::Format(format!("missing row {label},{missing}")));
                }
            };
            table.insert(label, errors)?;
        }
        Ok(table)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{ERROR_TABLE_HEADER}")?;
        for (label, errors) in &self.rows {
            match errors {
                CorruptionErrors::PerSeverity(v) => {
                    for (s, x) in v.iter().enumerate() {
                        writeln!(out, "{label},{},{}", s + 1, format_error(*x))?;
                    }
                }
                CorruptionErrors::Mean(m) => writeln!(out, "{label},avg,{}", format_error(*m))?,
            }
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("ascii")
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_csv(std::fs::File::open(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv_string())?;
        Ok(())
    }
}

/// Six decimals when that is exact, the shortest round-tripping form
/// otherwise.
fn format_error(x: f64) -> String {
    let fixed = format!("{x:.6}");
    if fixed.parse::<f64>() == Ok(x) {
        fixed
    } else {
        format!("{x}")
    }
}

/// Mean corruption error in percent: per corruption, the model's summed
/// errors over the baseline's, averaged over corruptions.
pub fn mce(model: &ErrorTable, baseline: &ErrorTable) -> Result<f64> {
    if model.is_empty() {
        return Err(Error::Format("empty error table".into()));
    }
    let model_labels: HashSet<&str> = model.labels().collect();
    let base_labels: HashSet<&str> = baseline.labels().collect();
    if let Some(missing) = base_labels.difference(&model_labels).min() {
        return Err(Error::Format(format!(
            "model table lacks corruption `{missing}`"
        )));
    }
    if let Some(extra) = model_labels.difference(&base_labels).min() {
        return Err(Error::Format(format!(
            "baseline table lacks corruption `{extra}`"
        )));
    }
    let mut ratios = Vec::with_capacity(model.len());
    for (label, m) in &model.rows {
        let b = baseline.get(label).expect("label sets agree");
        let ratio = match (m, b) {
            (CorruptionErrors::PerSeverity(mv), CorruptionErrors::PerSeverity(bv)) => {
                let denom = exact_sum(bv.iter().copied());
                if denom <= 0.0 {
                    return Err(Error::Format(format!(
                        "baseline errors of `{label}` sum to zero"
                    )));
                }
                exact_sum(mv.iter().copied()) / denom
            }
            _ => {
                let denom = b.mean();
                if denom <= 0.0 {
                    return Err(Error::Format(format!(
                        "baseline error of `{label}` is zero"
                    )));
                }
                m.mean() / denom
            }
        };
        ratios.push(ratio);
    }
    Ok(exact_sum(ratios.iter().copied()) / ratios.len() as f64 * 100.0)
}
