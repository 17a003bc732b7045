//! Numerical kernel: dense layers, LSTM, dropout, softmax, cross-modal
//! attention, weighted cross-entropy and elastic-net, each with a
//! closed-form backward pass.
//!
//! Everything is generic over [`Scalar`] so the same code trains in `f32`
//! and is gradient-checked in `f64`.

mod checkpoint;
mod linear;
mod loss;
mod lstm;
mod ops;
mod params;

use std::fmt::Debug;
use std::iter::Sum;

use ndarray::NdFloat;
use num_traits::FromPrimitive;
use thiserror::Error;

pub use checkpoint::{decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC};
pub use linear::{linear_forward, Linear};
pub use loss::{elastic_net_grad, elastic_net_penalty, weighted_cross_entropy, LossSpec};
pub use lstm::{lstm_forward, Lstm, LstmCache, SeqBatch};
pub use ops::{
    cma_backward, cma_forward, dropout_apply, relu, relu_backward, softmax, softmax_rows, CmaGrads,
    CmaOutput,
};
pub use params::{ParamGrads, ParamId, ParamSpec, ParamValues, ParameterSet};


/// Floating-point element type of all kernels (`f32` or `f64`).
pub trait Scalar: NdFloat + FromPrimitive + Default + Sum + Debug {}

impl Scalar for f32 {}
impl Scalar for f64 {}

pub(crate) fn cast<T: Scalar>(x: f64) -> T {
    T::from_f64(x).expect("finite constant")
}

/// Train mode enables dropout; eval mode is deterministic.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NnError {
    #[error("shape mismatch in {op}: {detail}")]
    ShapeMismatch { op: &'static str, detail: String },
    #[error("dropout rate must lie in [0, 1), got {0}")]
    BadDropout(f64),
    #[error("invalid loss specification: {0}")]
    BadLoss(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

pub(crate) fn shape_err(op: &'static str, detail: impl Into<String>) -> NnError {
    NnError::ShapeMismatch {
        op,
        detail: detail.into(),
    }
}
