//! On-disk embedding store: binary embedding files, the JSON manifest that
//! indexes them, shape validation, video padding, and CV splits.

mod dataset;
mod format;
mod manifest;
mod split;
mod validate;

use std::path::PathBuf;

use thiserror::Error;

use crate::ModalityKind;

pub use dataset::{Dataset, SampleData};
pub use format::{
    decode_embedding, encode_embedding, read_embedding, write_embedding, EmbeddingMatrix,
    FormatError, EMBEDDING_HEADER_LEN, EMBEDDING_MAGIC, EMBEDDING_VERSION,
};
pub use manifest::{load_manifest, DatasetManifest, Label, SampleRecord, MANIFEST_VERSION};
pub use split::{split_dataset, Fold, SplitPlan, FOLD_COUNT, TEST_FRACTION};
pub use validate::{
    expected_cols, pad_frames, pad_video, validate_manifest, validate_matrix, validate_sample,
    ModalityCheck, ShapeViolation, ValidationReport,
};

/// Embedding width for transcript and on-screen text.
pub const TEXT_DIM: usize = 768;
/// Embedding width for the audio vector.
pub const AUDIO_DIM: usize = 1024;
/// Embedding width of one video frame.
pub const VIDEO_DIM: usize = 768;
/// Frames per video after padding.
pub const MAX_FRAMES: usize = 100;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed embedding file {path}: {source}")]
    Format {
        path: PathBuf,
        #[source]
        source: FormatError,
    },
    #[error("malformed manifest {path}: {message}")]
    ManifestParse { path: PathBuf, message: String },
    #[error("unsupported manifest format_version {0}")]
    UnsupportedVersion(u32),
    #[error("DuplicateId({0:?})")]
    DuplicateId(String),
    #[error("sample {id:?} has no {modality} embedding reference")]
    MissingModality { id: String, modality: ModalityKind },
    #[error("blank-frame vector has {got} entries, expected {expected}")]
    BadPadVector { expected: usize, got: usize },
    #[error("sample {id:?} failed validation: {reason}")]
    InvalidSample { id: String, reason: String },
    #[error("cannot pad a video with {rows} frames to {target}")]
    BadFrameCount { rows: usize, target: usize },
    #[error("need at least {min} samples to split, got {got}")]
    TooFewSamples { min: usize, got: usize },
    #[error("too few samples to stratify: class {label:?} has {count} (need {min})")]
    TooFewToStratify { label: Label, count: usize, min: usize },
    #[error("unknown sample id {0:?}")]
    UnknownId(String),
}

impl StoreError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        StoreError::Io {
            path: path.into(),
            source,
        }
    }
}
