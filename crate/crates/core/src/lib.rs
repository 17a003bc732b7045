//! Multi-modal fusion classification over pre-extracted video embeddings.
//!
//! Four modalities (speech transcript, on-screen text, audio, video frames)
//! arrive as fixed-width embedding matrices. Models combine them either by
//! concatenating per-modality encoder outputs or through cross-modal
//! attention (CMA), where one modality queries a sequence-stacked set of the
//! others. The crate covers the whole path from the on-disk embedding format
//! to cross-validated experiment tables:
//!
//! - [`store`]: binary embedding files, dataset manifests, validation, splits.
//! - [`ocr`]: on-screen text cleaning, de-duplication and overlap merging.
//! - [`nn`]: dense/LSTM/attention kernels with closed-form gradients.
//! - [`models`]: the fusion model zoo built on those kernels.
//! - [`metrics`]: confusion-matrix metrics and multi-seed aggregation.
//! - [`train`]: optimisation, plateau schedule, early stopping, CV, grid search.
//! - [`experiment`]: declarative experiment families and the synthetic generator.

pub mod exec;
pub mod experiment;
pub mod metrics;
pub mod modality;
pub mod models;
pub mod nn;
pub mod ocr;
pub mod store;
pub mod train;

pub use modality::{ModalityKind, ModalitySet};
