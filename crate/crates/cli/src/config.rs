//! TOML run configuration. Every section is optional and unknown keys are
//! rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};
use shiftnorm::bench::{BatchSize, ExperimentConfig, SweepConfig};
use shiftnorm::bounds::{SandwichGrid, MIN_TRIALS};
use shiftnorm::corrupt::{
    CorruptionFamily, CorruptionSpec, MixtureSpec, SeverityTables, SEVERITIES,
};
use shiftnorm::{ShiftMetric, TrainSchedule};

use crate::exit::{usage, CliResult};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// The only source of randomness.
    pub seed: u64,
    pub data: DataSection,
    pub model: ModelSection,
    pub train: TrainSection,
    pub corruptions: SeverityTables,
    pub adapt: AdaptSection,
    pub sweep: SweepSection,
    pub scan: ScanSection,
    pub predict: PredictSection,
    pub bounds: BoundsSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataSection {
    pub classes: usize,
    pub dim: usize,
    pub train_per_class: usize,
    pub test_per_class: usize,
    pub mixture: MixtureSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub hidden: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdaptSection {
    pub pseudo_count: f64,
    /// Replace statistics one batch-norm layer at a time.
    pub layerwise: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    pub families: Vec<CorruptionFamily>,
    pub severities: Vec<u8>,
    pub batch_sizes: Vec<BatchSize>,
    pub pseudo_counts: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScanSection {
    pub metric: ShiftMetric,
    pub permutations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PredictSection {
    pub holdout: CorruptionFamily,
    pub test: Vec<CorruptionFamily>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BoundsSection {
    pub trials: usize,
    pub grid: SandwichGrid,
}

impl Default for DataSection {
    fn default() -> Self {
        let e = ExperimentConfig::default();
        Self {
            classes: e.classes,
            dim: e.dim,
            train_per_class: e.train_per_class,
            test_per_class: e.test_per_class,
            mixture: e.mixture,
        }
    }
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            hidden: ExperimentConfig::default().hidden,
        }
    }
}

impl Default for TrainSection {
    fn default() -> Self {
        let s = TrainSchedule::default();
        Self {
            epochs: s.epochs,
            learning_rate: s.learning_rate,
            batch_size: s.batch_size,
        }
    }
}

impl Default for AdaptSection {
    fn default() -> Self {
        Self {
            pseudo_count: 0.0,
            layerwise: false,
        }
    }
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            families: CorruptionFamily::ALL.to_vec(),
            severities: SEVERITIES.to_vec(),
            batch_sizes: [1, 2, 8, 32, 128]
                .map(BatchSize::Fixed)
                .into_iter()
                .chain([BatchSize::Full])
                .collect(),
            pseudo_counts: vec![0.0, 16.0, f64::INFINITY],
        }
    }
}

impl Default for ScanSection {
    fn default() -> Self {
        Self {
            metric: ShiftMetric::W2Normalized,
            permutations: 100,
        }
    }
}

impl Default for PredictSection {
    fn default() -> Self {
        Self {
            holdout: CorruptionFamily::Impulse,
            test: vec![CorruptionFamily::GaussNoise],
        }
    }
}

impl Default for BoundsSection {
    fn default() -> Self {
        Self {
            trials: 100_000,
            grid: SandwichGrid::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| usage(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| usage(format!("{}: {e}", path.display())))
    }

    pub fn parse(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }

    pub fn experiment(&self) -> ExperimentConfig {
        ExperimentConfig {
            seed: self.seed,
            classes: self.data.classes,
            dim: self.data.dim,
            train_per_class: self.data.train_per_class,
            test_per_class: self.data.test_per_class,
            hidden: self.model.hidden.clone(),
            mixture: self.data.mixture,
            schedule: TrainSchedule {
                epochs: self.train.epochs,
                learning_rate: self.train.learning_rate,
                batch_size: self.train.batch_size,
                seed: self.seed,
            },
        }
    }

    /// Every configured family at every configured severity.
    pub fn sweep_specs(&self) -> CliResult<Vec<CorruptionSpec>> {
        specs(
            &self.corruptions,
            &self.sweep.families,
            &self.sweep.severities,
        )
    }

    /// All families at all severities.
    pub fn scan_specs(&self) -> CliResult<Vec<CorruptionSpec>> {
        specs(&self.corruptions, &CorruptionFamily::ALL, &SEVERITIES)
    }

    pub fn sweep_config(&self) -> CliResult<SweepConfig> {
        Ok(SweepConfig {
            corruptions: self.sweep_specs()?,
            batch_sizes: self.sweep.batch_sizes.clone(),
            pseudo_counts: self.sweep.pseudo_counts.clone(),
            seed: self.seed,
        })
    }

    /// Checks cross-field preconditions the types cannot express.
    pub fn validate(&self) -> CliResult<()> {
        self.corruptions
            .validate()
            .map_err(|e| usage(format!("corruptions: {e}")))?;
        if self.bounds.trials < MIN_TRIALS {
            return Err(usage(format!(
                "bounds.trials must be at least {MIN_TRIALS}, got {}",
                self.bounds.trials
            )));
        }
        if !(self.bounds.grid.alpha > 0.0 && self.bounds.grid.alpha < 1.0) {
            return Err(usage(format!(
                "bounds alpha must lie in (0, 1), got {}",
                self.bounds.grid.alpha
            )));
        }
        if self.adapt.pseudo_count.is_nan() || self.adapt.pseudo_count < 0.0 {
            return Err(usage(format!(
                "adapt.pseudo_count must be >= 0, got {}",
                self.adapt.pseudo_count
            )));
        }
        if self.predict.test.is_empty() {
            return Err(usage("predict.test must name at least one family"));
        }
        Ok(())
    }
}

fn specs(
    tables: &SeverityTables,
    families: &[CorruptionFamily],
    severities: &[u8],
) -> CliResult<Vec<CorruptionSpec>> {
    let mut out = Vec::with_capacity(families.len() * severities.len());
    for &family in families {
        for &severity in severities {
            out.push(
                tables
                    .spec(family, severity)
                    .map_err(|e| usage(e.to_string()))?,
            );
        }
    }
    if out.is_empty() {
        return Err(usage("sweep needs at least one family and one severity"));
    }
    Ok(out)
}
