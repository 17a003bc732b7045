use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use super::{cast, shape_err, NnError, ParameterSet, Scalar};

/// Class weights and elastic-net coefficients.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossSpec {
    /// Indexed by label: `[non_hate, hate]`.
    pub class_weights: [f64; 2],
    pub l1: f64,
    pub l2: f64,
}

impl Default for LossSpec {
    fn default() -> Self {
        Self {
            class_weights: [1.0, 1.0],
            l1: 0.0,
            l2: 0.0,
        }
    }
}

impl LossSpec {
    pub fn validate(&self) -> Result<(), NnError> {
        if self.class_weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(NnError::BadLoss(format!(
                "class weights must be positive, got {:?}",
                self.class_weights
            )));
        }
        if !(self.l1 >= 0.0 && self.l2 >= 0.0) {
            return Err(NnError::BadLoss(format!(
                "penalties must be nonnegative, got l1={} l2={}",
                self.l1, self.l2
            )));
        }
        Ok(())
    }

    /// Weights `N / (2 N_c)` from per-class counts, so both classes carry
    /// equal total weight.
    pub fn balanced_weights(counts: [usize; 2]) -> [f64; 2] {
        let n = (counts[0] + counts[1]) as f64;
        counts.map(|c| if c == 0 { 1.0 } else { n / (2.0 * c as f64) })
    }
}

/// Mean over the batch of `w_y · -log softmax(logits)[y]`, with the gradient
/// with respect to the logits.
pub fn weighted_cross_entropy<T: Scalar>(
    logits: ArrayView2<T>,
    labels: &[usize],
    class_weights: [f64; 2],
) -> Result<(T, Array2<T>), NnError> {
    if logits.ncols() != 2 || logits.nrows() != labels.len() || labels.is_empty() {
        return Err(shape_err(
            "cross_entropy",
            format!("logits {:?} for {} labels", logits.dim(), labels.len()),
        ));
    }
    if let Some(bad) = labels.iter().find(|&&y| y > 1) {
        return Err(NnError::BadLoss(format!("label {bad} outside {{0, 1}}")));
    }
    let n: T = cast(labels.len() as f64);
    let mut loss = T::zero();
    let mut grad = Array2::zeros(logits.raw_dim());
    for ((row, mut g), &y) in logits.rows().into_iter().zip(grad.rows_mut()).zip(labels) {
        let max = row[0].max(row[1]);
        let lse = max + ((row[0] - max).exp() + (row[1] - max).exp()).ln();
        let w: T = cast(class_weights[y]);
        loss = loss + w * (lse - row[y]);
        for c in 0..2 {
            let p = (row[c] - lse).exp();
            let target = if c == y { T::one() } else { T::zero() };
            g[c] = w * (p - target) / n;
        }
    }
    Ok((loss / n, grad))
}

/// `l1·Σ|w| + l2·Σw²` over the regularized (weight) tensors.
pub fn elastic_net_penalty<T: Scalar>(params: &ParameterSet<T>, l1: f64, l2: f64) -> T {
    let (l1, l2): (T, T) = (cast(l1), cast(l2));
    let vals = params.flat_values();
    // Independent lanes so the reduction is not one serial dependency chain.
    let mut lanes = [T::zero(); 8];
    for spec in params.specs().iter().filter(|s| s.regularized) {
        let ws = &vals[spec.offset..spec.offset + spec.len()];
        let chunks = ws.chunks_exact(8);
        for (i, &w) in chunks.remainder().iter().enumerate() {
            lanes[i] = lanes[i] + l1 * w.abs() + l2 * w * w;
        }
        for chunk in chunks {
            for (acc, &w) in lanes.iter_mut().zip(chunk) {
                *acc = *acc + l1 * w.abs() + l2 * w * w;
            }
        }
    }
    lanes.iter().fold(T::zero(), |a, &b| a + b)
}

/// Adds the penalty gradient `l1·sign(w) + 2·l2·w` to the gradient buffer.
pub fn elastic_net_grad<T: Scalar>(params: &mut ParameterSet<T>, l1: f64, l2: f64) {
    let (l1, l2x2): (T, T) = (cast(l1), cast(2.0 * l2));
    let ranges: Vec<_> = params
        .specs()
        .iter()
        .filter(|s| s.regularized)
        .map(|s| s.offset..s.offset + s.len())
        .collect();
    let (vals, grads) = params.values_with_grads_mut();
    for range in ranges {
        for (g, &w) in grads[range.clone()].iter_mut().zip(&vals[range]) {
            let pos = if w > T::zero() { l1 } else { T::zero() };
            let neg = if w < T::zero() { l1 } else { T::zero() };
            *g = *g + (pos - neg) + l2x2 * w;
        }
    }
}
