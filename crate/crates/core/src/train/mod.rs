//! Training protocol: Adam on weighted cross-entropy plus elastic net,
//! plateau learning-rate schedule, early stopping, five-fold cross
//! validation and exhaustive grid search.

mod adam;
mod cv;
mod schedule;
mod trainer;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::MetricsError;
use crate::models::ModelError;
use crate::store::StoreError;

pub use adam::Adam;
pub use cv::{grid_search, run_cv, CvResult, FoldResult, GridEntry, GridResult, SeedResult};
pub use schedule::{EarlyStopping, PlateauScheduler, IMPROVEMENT_EPS};
pub use trainer::{evaluate, train, EpochRecord, Evaluation, TrainOutcome};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("invalid hyperparameters: {0}")]
    BadHyperParams(String),
    #[error("training fold needs both classes, got counts {0:?}")]
    SingleClassFold([usize; 2]),
    #[error("non-finite {stage} loss {loss} at epoch {epoch}")]
    Divergence { epoch: usize, stage: &'static str, loss: f64 },
    #[error("test id {0} appears in a training fold")]
    Leakage(String),
    #[error("seed {seed}, fold {fold}: {source}")]
    Fold {
        seed: u64,
        fold: usize,
        #[source]
        source: Box<TrainError>,
    },
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HyperParams {
    pub lr: f64,
    pub l1: f64,
    pub l2: f64,
    pub dropout: f64,
    /// Early-stopping patience.
    pub patience: usize,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub lr_factor: f64,
    pub lr_patience: usize,
}

impl Default for HyperParams {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            l1: 1e-5,
            l2: 1e-5,
            dropout: 0.3,
            patience: 10,
            batch_size: 8,
            max_epochs: 100,
            lr_factor: 0.1,
            lr_patience: 6,
        }
    }
}

impl HyperParams {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |msg: String| Err(TrainError::BadHyperParams(msg));
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return bad(format!("lr must be positive, got {}", self.lr));
        }
        if !(self.l1 >= 0.0 && self.l2 >= 0.0) {
            return bad(format!("l1/l2 must be nonnegative, got {} / {}", self.l1, self.l2));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout must lie in [0, 1), got {}", self.dropout));
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive".into());
        }
        if !(self.lr_factor > 0.0 && self.lr_factor <= 1.0) || self.lr_patience == 0 {
            return bad(format!(
                "lr_factor must lie in (0, 1] and lr_patience be positive, got {} / {}",
                self.lr_factor, self.lr_patience
            ));
        }
        Ok(())
    }

    /// Ordering key for deterministic tie-breaks.
    pub fn sort_key(&self) -> (f64, f64, f64, f64, usize) {
        (self.lr, self.l1, self.l2, self.dropout, self.patience)
    }
}

/// Candidate values per searched hyperparameter. Unsearched fields come from
/// `base`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HyperGrid {
    pub lr: Vec<f64>,
    pub l1: Vec<f64>,
    pub l2: Vec<f64>,
    pub dropout: Vec<f64>,
    pub patience: Vec<usize>,
    pub base: HyperParams,
}

impl Default for HyperGrid {
    fn default() -> Self {
        Self {
            lr: vec![1e-3, 1e-4, 1e-5],
            l1: vec![1e-3, 1e-4, 1e-5],
            l2: vec![1e-4, 1e-5, 1e-6],
            dropout: vec![0.3, 0.4, 0.5],
            patience: vec![5, 10],
            base: HyperParams::default(),
        }
    }
}

impl HyperGrid {
    pub fn singleton(hp: HyperParams) -> Self {
        Self {
            lr: vec![hp.lr],
            l1: vec![hp.l1],
            l2: vec![hp.l2],
            dropout: vec![hp.dropout],
            patience: vec![hp.patience],
            base: hp,
        }
    }

    /// Every combination, sorted by [`HyperParams::sort_key`].
    pub fn points(&self) -> Vec<HyperParams> {
        let mut out = Vec::new();
        for &lr in &self.lr {
            for &l1 in &self.l1 {
                for &l2 in &self.l2 {
                    for &dropout in &self.dropout {
                        for &patience in &self.patience {
                            out.push(HyperParams {
                                lr,
                                l1,
                                l2,
                                dropout,
                                patience,
                                ..self.base.clone()
                            });
                        }
                    }
                }
            }
        }
        out.sort_by(|a, b| a.sort_key().partial_cmp(&b.sort_key()).unwrap());
        out
    }
}

/// Derives an independent stream seed (splitmix64 finaliser).
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_add(0x9e37_79b9_7f4a_7c15).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}


#[cfg(test)]
pub(crate) mod fixtures {
    use ndarray::{Array1, Array2};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    use crate::models::{ModelConfig, ModelDims};
    use crate::store::{split_dataset, Dataset, DatasetManifest, Label, SampleData, SampleRecord, SplitPlan};
    use crate::ModalitySet;

    pub const WIDTH: usize = 6;

    pub fn dims() -> ModelDims {
        ModelDims {
            text_dim: WIDTH,
            audio_dim: WIDTH,
            video_dim: WIDTH,
            frames: 3,
            hidden: vec![8],
            feature_dim: 4,
            lstm_hidden: 3,
            d_model: 4,
        }
    }

    pub fn concat_to() -> ModelConfig {
        ModelConfig::concat("TO".parse::<ModalitySet>().unwrap()).with_dims(dims())
    }

    /// Two classes separated by a wide margin along one direction in both
    /// T and O; the other modalities are noise.
    pub fn separable(n: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut noise = |len: usize, scale: f32| -> Array1<f32> {
            Array1::from_shape_fn(len, |_| scale * rng.sample::<f32, _>(StandardNormal))
        };
        let samples = (0..n)
            .map(|i| {
                let label = if i % 2 == 0 { Label::Hate } else { Label::NonHate };
                let sign = if label == Label::Hate { 1.0 } else { -1.0 };
                let mut t = noise(WIDTH, 0.3);
                let mut o = noise(WIDTH, 0.3);
                t[0] += 2.0 * sign;
                o[1] += 2.0 * sign;
                SampleData {
                    id: format!("s{i:04}"),
                    label,
                    transcript: t,
                    ocr: o,
                    audio: noise(WIDTH, 1.0),
                    video: Array2::from_shape_fn((2, WIDTH), |(r, c)| (r + c) as f32 * 0.1),
                    has_onscreen_text: true,
                }
            })
            .collect();
        Dataset::from_samples(samples, Array1::zeros(WIDTH)).unwrap()
    }

    pub fn plan(data: &Dataset) -> SplitPlan {
        let records = data
            .samples()
            .iter()
            .map(|s| SampleRecord {
                id: s.id.clone(),
                label: s.label,
                embeddings: Default::default(),
                has_onscreen_text: true,
            })
            .collect();
        split_dataset(&DatasetManifest::new("fixture", records), 0).unwrap()
    }
}
