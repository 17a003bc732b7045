//! The fusion model zoo: per-modality encoders, cross-modal attention in
//! three roles, and a two-logit classification head.
//!
//! Parameter names are hierarchical: `enc.<M>.fc<l>`, `enc.V.lstm`,
//! `enc.V.fc`, `cma.{q,k,v}.<M>` and `head`, each with `.weight`/`.bias`
//! (or `.w_ih`/`.w_hh`/`.bias` for the LSTM).

mod batch;
mod config;
mod gradcheck;
mod model;

use thiserror::Error;

use crate::nn::NnError;
use crate::ModalityKind;

pub use batch::{Batch, RowBlock};
pub use config::{AttentionConfig, ModelConfig, ModelDims, ModelMode};
pub use gradcheck::{gradient_check, GradCheck};
pub use model::{ForwardCache, Model};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
    #[error("batch is missing modality {0}")]
    MissingModality(ModalityKind),
    #[error("empty batch")]
    EmptyBatch,
    #[error(transparent)]
    Nn(#[from] NnError),
}

/// Builds an `f32` model ready for training.
pub fn build_model(config: ModelConfig, seed: u64) -> Result<Model<f32>, ModelError> {
    Model::build(config, seed)
}
