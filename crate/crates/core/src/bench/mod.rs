//! Benchmark metrics and experiment drivers.

mod experiment;
mod mce;
mod predict;
mod scan;
mod sweep;

pub use experiment::{Experiment, ExperimentConfig};
pub use mce::{
    mce, CorruptionErrors, ErrorTable, ALEXNET_HOLDOUT_CSV, ALEXNET_TEST_CSV, ERROR_TABLE_HEADER,
};
pub use predict::{
    fit_error_predictor, prediction_report, prediction_tsv, LinearErrorModel, PredictionRow,
};
pub use scan::{pearson, permutation_correlations, shift_error_scan, ScanPoint, ScanResult};
pub use sweep::{evaluate_batched, sweep, BatchSize, SweepCell, SweepConfig, SweepResult};

use crate::corrupt::{CorruptionFamily, CorruptionSpec};
use crate::data::Dataset;
use crate::error::Result;
use crate::nn::{EvalMode, Network};
use crate::rng::hash2;

/// Rows per forward call when rows are independent.
const EVAL_CHUNK: usize = 4096;

/// Seed of the corrupted copy of the data for one spec; every driver uses
/// the same value so their cells see identical data.
pub fn corruption_seed(seed: u64, spec: &CorruptionSpec) -> u64 {
    let family = CorruptionFamily::ALL
        .iter()
        .position(|f| *f == spec.family)
        .expect("family listed") as u64;
    hash2(seed, (family << 8) | spec.severity as u64)
}

/// Top-1 error of `net` on `data` in `mode`.
pub fn top1_error(net: &Network, data: &Dataset, mode: &EvalMode) -> Result<f64> {
    let logits = net.forward_chunked(data.features(), mode, EVAL_CHUNK)?;
    let pred = crate::nn::argmax_rows(&logits);
    let wrong = pred
        .iter()
        .zip(data.labels())
        .filter(|(p, y)| p != y)
        .count();
    Ok(wrong as f64 / data.len() as f64)
}

/// Fixed six-decimal formatting used by every TSV writer.
pub(crate) fn fmt6(x: f64) -> String {
    format!("{x:.6}")
}
