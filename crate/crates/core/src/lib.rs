//! Batch-normalization statistics adaptation under covariate shift.
//!
//! The crate covers estimation and prior-weighted combination of per-feature
//! statistics ([`stats`]), Gaussian shift metrics ([`metrics`]), analytical
//! bounds on the expected estimation error of the combined statistics
//! ([`bounds`]), a small fully connected network with batch normalization
//! ([`nn`]), synthetic data with parametric corruptions ([`corrupt`]) and the
//! benchmark drivers built on top of them ([`bench`]).

pub mod bench;
pub mod bounds;
pub mod corrupt;
pub mod data;
pub mod error;
pub mod metrics;
pub mod nn;
pub mod rng;
pub mod special;
pub mod stats;

pub use bounds::{BoundInput, BoundResult, McEstimate, Objective};

pub use corrupt::{CorruptionFamily, CorruptionSpec, SeverityTables};
pub use data::Dataset;
pub use error::{Error, Result};
pub use metrics::{ShiftMetric, ShiftReport};
pub use nn::{EvalMode, Network, TrainSchedule};

pub use rng::CounterRng;
pub use stats::{combine_stats, estimate_stats, CombineConfig, FeatureStats};
