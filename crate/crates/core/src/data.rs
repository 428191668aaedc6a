//! Labelled datasets and their CSV form (`f0..f{D-1},y`).

use std::io::{Read, Write};
use std::path::Path;

use ndarray::{Array2, ArrayView2, Axis};

use crate::error::{invalid, Error, Result};
use crate::rng::CounterRng;

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Array2<f64>,
    labels: Vec<usize>,
    classes: usize,
}

impl Dataset {
    pub fn new(features: Array2<f64>, labels: Vec<usize>, classes: usize) -> Result<Self> {
        if features.nrows() != labels.len() {
            return Err(Error::DimensionMismatch {
                expected: features.nrows(),
                found: labels.len(),
            });
        }
        if features.ncols() == 0 {
            return Err(invalid("dataset needs at least one feature"));
        }
        if classes < 2 {
            return Err(invalid("dataset needs at least two classes"));
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= classes) {
            return Err(invalid(format!(
                "label {bad} out of range for {classes} classes"
            )));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(Self {
            features,
            labels,
            classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn features(&self) -> ArrayView2<'_, f64> {
        self.features.view()
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// Copy with the same labels and replaced features.
    pub fn with_features(&self, features: Array2<f64>) -> Result<Self> {
        Self::new(features, self.labels.clone(), self.classes)
    }

    pub fn select(&self, indices: &[usize]) -> Self {
        Self {
            features: self.features.select(Axis(0), indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            classes: self.classes,
        }
    }

    pub fn shuffled(&self, seed: u64) -> Self {
        let perm = CounterRng::new(seed).permutation(self.len());
        self.select(&perm)
    }

    /// Samples per class.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.classes];
        for &y in &self.labels {
            counts[y] += 1;
        }
        counts
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header: Vec<String> = (0..self.dim()).map(|j| format!("f{j}")).collect();
        header.push("y".into());
        w.write_record(&header)?;
        for (row, &y) in self.features.rows().into_iter().zip(&self.labels) {
            let mut rec: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            rec.push(y.to_string());
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads `f0..f{D-1},y`. The class count is `max(y) + 1` unless given.
    pub fn read_csv<R: Read>(input: R, classes: Option<usize>) -> Result<Self> {
        let mut r = csv::Reader::from_reader(input);
        let header = r.headers()?.clone();
        let d = header
            .len()
            .checked_sub(1)
            .filter(|&d| d > 0)
            .ok_or_else(|| {
                Error::Format("dataset CSV needs feature columns and a label column".into())
            })?;
        for (j, name) in header.iter().enumerate() {
            let expected = if j == d {
                "y".to_string()
            } else {
                format!("f{j}")
            };
            if name != expected {
                return Err(Error::Format(format!(
                    "dataset CSV column {j}: expected `{expected}`, found `{name}`"
                )));
            }
        }
        let mut values = Vec::new();
        let mut labels = Vec::new();
        for (line, rec) in r.records().enumerate() {
            let rec = rec?;
            for j in 0..d {
                let v: f64 = rec[j].parse().map_err(|_| {
                    Error::Format(format!("row {}: bad value `{}` in f{j}", line + 1, &rec[j]))
                })?;
                values.push(v);
            }
            let y: usize = rec[d]
                .parse()
                .map_err(|_| Error::Format(format!("row {}: bad label `{}`", line + 1, &rec[d])))?;
            labels.push(y);
        }
        let n = labels.len();
        let k = classes.unwrap_or_else(|| labels.iter().max().map_or(2, |m| (m + 1).max(2)));
        let features =
            Array2::from_shape_vec((n, d), values).map_err(|e| Error::Format(e.to_string()))?;
        Self::new(features, labels, k)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }

    pub fn load(path: &Path, classes: Option<usize>) -> Result<Self> {
        Self::read_csv(std::fs::File::open(path)?, classes)
    }
}
