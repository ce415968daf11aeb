//! Core data model for pool-based active-learning experiments: configs,
//! partitions, acquisition rules, the simulated oracle and result statistics.
//!
//! Nothing here touches a neural network. The model crate produces
//! [`tensor::PredictionTensor`]s and [`tensor::EmbeddingMatrix`]es and the
//! samplers in [`acquisition`] turn them into index sets.

pub mod acquisition;
pub mod analysis;
pub mod config;
pub mod dataset;
pub mod error;
pub mod index_set;
pub mod oracle;
pub mod partition;
pub mod records;
pub mod rng;
pub mod tensor;

pub use error::{Error, Result};

/// Largest RandAugment magnitude.
pub const RA_MAX_MAGNITUDE: usize = 10;
