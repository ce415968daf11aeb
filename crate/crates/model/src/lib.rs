//! Task models for the active-learning loop: a small hand-written CNN
//! engine, training with model selection, MC-dropout and embedding views,
//! RandAugment, weight averaging and the VAAL sampler.

pub mod augment;
pub mod checkpoint;
pub mod error;
pub mod layers;
pub mod network;
pub mod swa;
pub mod training;
pub mod vaal;

pub use error::{ModelError, Result};
pub use network::{Network, NetworkSpec};
pub use training::{
    evaluate, mc_dropout_predict, penultimate_embeddings, predict_proba, train_task_model,
    TrainReport, TrainSettings,
};
