use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Adam, EarlyStopping, HyperParams, PlateauScheduler, TrainError};
use crate::metrics::{compute_report, confusion, ConfusionCounts, MetricsReport};
use crate::models::{Batch, Model};
use crate::nn::{weighted_cross_entropy, LossSpec, ParameterSet};
use crate::store::Dataset;

const EVAL_BATCH: usize = 64;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    /// Learning rate used during this epoch.
    pub lr: f64,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_m_f1: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// 1-based epoch of the returned snapshot; `None` if no epoch ran.
    pub best_epoch: Option<usize>,
    pub best_val_loss: f64,
    /// Validation M-F1 of the returned snapshot.
    pub best_val_m_f1: f64,
    pub history: Vec<EpochRecord>,
    pub stopped_early: bool,
    pub class_weights: [f64; 2],
    /// Wall-clock training time; excluded from anything compared for
    /// reproducibility.
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    /// Mean weighted cross-entropy (no penalty).
    pub loss: f64,
    pub preds: Vec<usize>,
    pub labels: Vec<usize>,
    pub confusion: ConfusionCounts,
    pub report: MetricsReport,
}

/// Eval-mode loss and metrics over `indices`.
pub fn evaluate(
    model: &Model<f32>,
    data: &Dataset,
    indices: &[usize],
    class_weights: [f64; 2],
) -> Result<Evaluation, TrainError> {
    let needed = model.config().required();
    let frames = model.config().dims.frames;
    let mut total = 0.0;
    let mut preds = Vec::with_capacity(indices.len());
    let mut labels = Vec::with_capacity(indices.len());
    for chunk in indices.chunks(EVAL_BATCH) {
        let batch = Batch::<f32>::from_dataset(data, chunk, needed, frames);
        let logits = model.logits(&batch)?;
        let (loss, _) = weighted_cross_entropy(logits.view(), &batch.labels, class_weights)
            .map_err(crate::models::ModelError::from)?;
        total += loss as f64 * chunk.len() as f64;
        preds.extend(logits.rows().into_iter().map(|r| usize::from(r[1] > r[0])));
        labels.extend_from_slice(&batch.labels);
    }
    let c = confusion(&preds, &labels)?;
    Ok(Evaluation {
        loss: total / indices.len() as f64,
        report: compute_report(&c),
        confusion: c,
        preds,
        labels,
    })
}

/// Trains on `train_idx`, validating on `val_idx` after every epoch, and
/// leaves the model holding the parameters with the lowest validation loss.
/// With `max_epochs = 0` the model is untouched and the history is empty.
pub fn train(
    model: &mut Model<f32>,
    data: &Dataset,
    train_idx: &[usize],
    val_idx: &[usize],
    hp: &HyperParams,
    seed: u64,
) -> Result<TrainOutcome, TrainError> {
    hp.validate()?;
    model.set_dropout(hp.dropout)?;
    let mut counts = [0usize; 2];
    for &i in train_idx {
        counts[data.sample(i).label.index()] += 1;
    }
    if counts.contains(&0) || val_idx.is_empty() {
        return Err(TrainError::SingleClassFold(counts));
    }
    let loss = LossSpec {
        class_weights: LossSpec::balanced_weights(counts),
        l1: hp.l1,
        l2: hp.l2,
    };
    let started = Instant::now();
    let needed = model.config().required();
    let frames = model.config().dims.frames;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut adam = Adam::new(hp.lr, model.param_count());
    let mut scheduler = PlateauScheduler::new(hp.lr, hp.lr_factor, hp.lr_patience);
    let mut stopper = EarlyStopping::new(hp.patience);
    let mut best: Option<(usize, f64, f64, ParameterSet<f32>)> = None;
    let mut history = Vec::new();
    let mut order = train_idx.to_vec();
    let mut stopped_early = false;

    for epoch in 1..=hp.max_epochs {
        order.shuffle(&mut rng);
        let mut sum = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(hp.batch_size) {
            let batch = Batch::<f32>::from_dataset(data, chunk, needed, frames);
            let value = model.loss_and_grad(&batch, &loss, &mut rng)? as f64;
            if !value.is_finite() {
                return Err(TrainError::Divergence {
                    epoch,
                    stage: "training",
                    loss: value,
                });
            }
            adam.step(model.params_mut());
            sum += value;
            batches += 1;
        }
        let val = evaluate(model, data, val_idx, loss.class_weights)?;
        if !val.loss.is_finite() {
            return Err(TrainError::Divergence {
                epoch,
                stage: "validation",
                loss: val.loss,
            });
        }
        history.push(EpochRecord {
            epoch,
            lr: adam.lr,
            train_loss: sum / batches as f64,
            val_loss: val.loss,
            val_m_f1: val.report.m_f1,
        });
        if stopper.record(val.loss) {
            best = Some((epoch, val.loss, val.report.m_f1, model.params().clone()));
        }
        adam.lr = scheduler.step(val.loss);
        if stopper.should_stop() {
            stopped_early = true;
            break;
        }
    }

    let (best_epoch, best_val_loss, best_val_m_f1) = match best {
        Some((epoch, loss, m_f1, params)) => {
            model.load_params(&params)?;
            (Some(epoch), loss, m_f1)
        }
        None => {
            let val = evaluate(model, data, val_idx, loss.class_weights)?;
            (None, val.loss, val.report.m_f1)
        }
    };
    Ok(TrainOutcome {
        best_epoch,
        best_val_loss,
        best_val_m_f1,
        history,
        stopped_early,
        class_weights: loss.class_weights,
        seconds: started.elapsed().as_secs_f64(),
    })
}
