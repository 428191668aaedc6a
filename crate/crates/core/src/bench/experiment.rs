//! The default desk-scale experiment: synthetic data and a trained network.

use serde::{Deserialize, Serialize};

use crate::corrupt::{make_dataset_with, make_split, MixtureSpec};
use crate::data::Dataset;
use crate::error::Result;
use crate::nn::{Network, TrainSchedule};

const TEST_SPLIT: u64 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub classes: usize,
    pub dim: usize,
    pub train_per_class: usize,
    pub test_per_class: usize,
    pub hidden: Vec<usize>,
    pub mixture: MixtureSpec,
    pub schedule: TrainSchedule,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            classes: 3,
            dim: 2,
            train_per_class: 500,
            test_per_class: 512,
            hidden: vec![32, 32],
            mixture: MixtureSpec {
                separation: 6.0,
                offset: 8.0,
                ..MixtureSpec::default()
            },
            schedule: TrainSchedule::default(),
        }
    }
}

/// A trained network with its training and held-out clean data.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub net: Network,
    pub train: Dataset,
    pub test: Dataset,
}

impl ExperimentConfig {
    /// Training and test splits share class means and differ in samples.
    pub fn datasets(&self) -> Result<(Dataset, Dataset)> {
        let train = make_dataset_with(
            self.seed,
            self.classes,
            self.dim,
            self.train_per_class,
            &self.mixture,
        )?;
        let test = make_split(
            self.seed,
            TEST_SPLIT,
            self.classes,
            self.dim,
            self.test_per_class,
            &self.mixture,
        )?;
        Ok((train, test))
    }

    pub fn prepare(&self) -> Result<Experiment> {
        let (train, test) = self.datasets()?;
        let mut net = Network::mlp(self.dim, &self.hidden, self.classes, self.seed)?;
        net.train(&train, &self.schedule)?;
        Ok(Experiment { net, train, test })
    }
}
