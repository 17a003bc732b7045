use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Batch, Model, ModelError};
use crate::nn::{elastic_net_penalty, weighted_cross_entropy, LossSpec, Mode};

/// Outcome of comparing analytic gradients with central differences.
#[derive(Clone, Debug, PartialEq)]
pub struct GradCheck {
    /// Entries with `|g| > floor` that were compared.
    pub checked: usize,
    pub max_rel_error: f64,
    /// Parameter name and element index of the worst entry.
    pub worst: Option<(String, usize)>,
    /// `(|analytic|, relative error)` of every compared entry.
    pub entries: Vec<(f64, f64)>,
    /// Penalised loss at the unperturbed parameters.
    pub loss: f64,
}

impl GradCheck {
    pub fn passed(&self, tolerance: f64) -> bool {
        self.max_rel_error <= tolerance
    }
}

fn penalised_loss(model: &Model<f64>, batch: &Batch<f64>, loss: &LossSpec, seed: u64) -> Result<f64, ModelError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (logits, _) = model.forward(batch, Mode::Train, &mut rng)?;
    let (data, _) = weighted_cross_entropy(logits.view(), &batch.labels, loss.class_weights)?;
    Ok(data + elastic_net_penalty(model.params(), loss.l1, loss.l2))
}

/// Checks every parameter of `model` against central differences with step
/// `eps`. Dropout runs in train mode with masks drawn from `seed`, so every
/// evaluation sees the same masks. Relative error is
/// `|a - n| / max(|a|, |n|)`, compared only where `|a| > floor`.
pub fn gradient_check(
    model: &mut Model<f64>,
    batch: &Batch<f64>,
    loss: &LossSpec,
    seed: u64,
    eps: f64,
    floor: f64,
) -> Result<GradCheck, ModelError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    model.loss_and_grad(batch, loss, &mut rng)?;
    let base = penalised_loss(model, batch, loss, seed)?;
    let analytic = model.params().flat_grads().to_vec();
    let mut report = GradCheck {
        checked: 0,
        max_rel_error: 0.0,
        worst: None,
        entries: Vec::new(),
        loss: base,
    };
    let specs = model.params().specs().to_vec();
    for spec in &specs {
        for k in 0..spec.len() {
            let i = spec.offset + k;
            let a = analytic[i];
            if a.abs() <= floor {
                continue;
            }
            let orig = model.params().flat_values()[i];
            model.params_mut().flat_values_mut()[i] = orig + eps;
            let up = penalised_loss(model, batch, loss, seed)?;
            model.params_mut().flat_values_mut()[i] = orig - eps;
            let down = penalised_loss(model, batch, loss, seed)?;
            model.params_mut().flat_values_mut()[i] = orig;
            let n = (up - down) / (2.0 * eps);
            let rel = (a - n).abs() / a.abs().max(n.abs());
            report.checked += 1;
            report.entries.push((a.abs(), rel));
            if rel > report.max_rel_error {
                report.max_rel_error = rel;
                report.worst = Some((spec.name.clone(), k));
            }
        }
    }
    Ok(report)
}
