//! Minibatch SGD on softmax cross-entropy.

use log::debug;
use ndarray::Axis;
use serde::{Deserialize, Serialize};

use super::{Network, Norm, Trace};
use crate::data::Dataset;
use crate::error::{invalid, Error, Result};
use crate::rng::CounterRng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSchedule {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainSchedule {
    fn default() -> Self {
        Self {
            epochs: 30,
            learning_rate: 0.1,
            batch_size: 64,
            seed: 0,
        }
    }
}

impl TrainSchedule {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(invalid("learning rate must be a positive finite number"));
        }
        if self.batch_size < 2 {
            return Err(invalid("batch size must be at least 2"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    /// Mean of the minibatch losses.
    pub loss: f64,
    /// Minibatch (train-mode) accuracy.
    pub accuracy: f64,
}

impl Network {
    /// Trains in place and then stores, in every batch-norm layer, the
    /// statistics of one pass over the whole training set as one batch.
    pub fn train(&mut self, data: &Dataset, schedule: &TrainSchedule) -> Result<Vec<EpochLog>> {
        schedule.validate()?;
        if data.is_empty() {
            return Err(Error::EmptyBatch);
        }
        if data.classes() != self.classes() {
            return Err(Error::DimensionMismatch {
                expected: self.classes(),
                found: data.classes(),
            });
        }
        let mut log = Vec::with_capacity(schedule.epochs);
        for epoch in 0..schedule.epochs {
            let order = CounterRng::stream(schedule.seed, epoch as u64).permutation(data.len());
            let (mut loss_sum, mut hits, mut seen, mut batches) = (0.0, 0usize, 0usize, 0usize);
            for chunk in order.chunks(schedule.batch_size) {
                // a trailing batch of one has no batch variance
                if chunk.len() < 2 {
                    continue;
                }
                let x = data.features().select(Axis(0), chunk);
                let y: Vec<usize> = chunk.iter().map(|&i| data.labels()[i]).collect();
                let (loss, grads) = match self.loss_and_gradients(x.view(), &y) {
                    Err(Error::NonFinite) => return Err(Error::Diverged { epoch }),
                    other => other?,
                };
                if !loss.is_finite() {
                    return Err(Error::Diverged { epoch });
                }
                self.apply_gradients(&grads, schedule.learning_rate)?;
                let logits = match self.run(x.view(), Norm::Batch, &mut Trace::default()) {
                    Err(Error::NonFinite) => return Err(Error::Diverged { epoch }),
                    other => other?,
                };
                hits += super::argmax_rows(&logits)
                    .iter()
                    .zip(&y)
                    .filter(|(p, t)| p == t)
                    .count();
                seen += y.len();
                loss_sum += loss;
                batches += 1;
            }
            let entry = EpochLog {
                epoch,
                loss: loss_sum / batches.max(1) as f64,
                accuracy: hits as f64 / seen.max(1) as f64,
            };
            debug!(
                "epoch {epoch}: loss {:.4} acc {:.4}",
                entry.loss, entry.accuracy
            );
            log.push(entry);
        }
        self.store_training_stats(data)?;
        Ok(log)
    }

    fn store_training_stats(&mut self, data: &Dataset) -> Result<()> {
        if data.len() < 2 {
            return Err(Error::TrainBatchTooSmall(data.len()));
        }
        let mut trace = Trace {
            record_inputs: true,
            ..Trace::default()
        };
        self.run(data.features(), Norm::Batch, &mut trace)?;
        self.set_source_stats(trace.bn_inputs)
    }
}

#[cfg(test)]
mod tests {
    use super::super::EvalMode;
    use super::*;
    use ndarray::{Array1, Array2};

    fn separable(seed: u64, n: usize) -> Dataset {
        let mut rng = CounterRng::new(seed);
        let mut x = Array2::zeros((n, 2));
        let mut y = Vec::with_capacity(n);
        for i in 0..n {
            let label = i % 2;
            let centre = if label == 0 { -2.0 } else { 2.0 };
            x[[i, 0]] = rng.normal(centre, 0.7);
            x[[i, 1]] = rng.normal(0.5 * centre, 1.0);
            y.push(label);
        }
        Dataset::new(x, y, 2).unwrap()
    }

    /// Plain logistic regression, used to certify that the data is separable.
    fn logistic_accuracy(data: &Dataset) -> f64 {
        let mut w = Array1::<f64>::zeros(2);
        let mut b = 0.0;
        for _ in 0..500 {
            let mut gw = Array1::<f64>::zeros(2);
            let mut gb = 0.0;
            for (row, &y) in data.features().rows().into_iter().zip(data.labels()) {
                let p = 1.0 / (1.0 + (-(row.dot(&w) + b)).exp());
                gw = gw + &row * (p - y as f64);
                gb += p - y as f64;
            }
            w = w - gw * (0.5 / data.len() as f64);
            b -= gb * 0.5 / data.len() as f64;
        }
        let hits = data
            .features()
            .rows()
            .into_iter()
            .zip(data.labels())
            .filter(|(row, &y)| ((row.dot(&w) + b > 0.0) as usize) == y)
            .count();
        hits as f64 / data.len() as f64
    }

    #[test]
    fn learns_separable_data() {
        let data = separable(1, 400);
        assert!(logistic_accuracy(&data) >= 0.95);
        let mut net = Network::mlp(2, &[16], 2, 3).unwrap();
        let schedule = TrainSchedule {
            epochs: 50,
            learning_rate: 0.1,
            batch_size: 32,
            seed: 5,
        };
        net.train(&data, &schedule).unwrap();
        let pred = net
            .predict(data.features(), &EvalMode::SourceStats)
            .unwrap();
        assert!(super::super::accuracy(&pred, data.labels()) >= 0.98);
    }

    #[test]
    fn zero_epochs_only_populates_stats() {
        let data = separable(2, 64);
        let init = Network::mlp(2, &[8], 2, 1).unwrap();
        let mut net = init.clone();
        let log = net
            .train(
                &data,
                &TrainSchedule {
                    epochs: 0,
                    ..TrainSchedule::default()
                },
            )
            .unwrap();
        assert!(log.is_empty());
        assert_ne!(net, init);
        let mut restored = net.clone();
        restored.set_source_stats(init.source_stats()).unwrap();
        assert_eq!(restored, init);
        assert!(net.source_stats().iter().all(|s| s.count() == 64.0));
    }

    #[test]
    fn training_is_reproducible() {
        let data = separable(3, 200);
        let schedule = TrainSchedule {
            epochs: 5,
            seed: 9,
            ..TrainSchedule::default()
        };
        let mut a = Network::mlp(2, &[8, 8], 2, 4).unwrap();
        let mut b = a.clone();
        let la = a.train(&data, &schedule).unwrap();
        let lb = b.train(&data, &schedule).unwrap();
        assert_eq!(a, b);
        assert_eq!(la, lb);
    }

    #[test]
    fn divergence_reports_epoch() {
        let data = separable(4, 64);
        let mut net = Network::mlp(2, &[8], 2, 1).unwrap();
        let schedule = TrainSchedule {
            epochs: 3,
            learning_rate: 1e300,
            batch_size: 16,
            seed: 0,
        };
        match net.train(&data, &schedule) {
            Err(Error::Diverged { epoch }) => assert!(epoch < 3),
            other => panic!("expected divergence, got {other:?}"),
        }
    }
}
