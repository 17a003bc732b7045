use ndarray::{Array, Array2, ArrayView, ArrayView2, Axis, Dimension, Zip};
use rand::Rng;

use super::{cast, shape_err, Mode, NnError, Scalar};

/// Max-subtracted softmax along `axis`.
pub fn softmax<T: Scalar, D: Dimension>(x: ArrayView<T, D>, axis: Axis) -> Array<T, D> {
    let mut out = x.to_owned();
    for mut lane in out.lanes_mut(axis) {
        let max = lane.fold(T::neg_infinity(), |m, &v| m.max(v));
        lane.mapv_inplace(|v| (v - max).exp());
        let sum = lane.sum();
        lane.mapv_inplace(|v| v / sum);
    }
    out
}

pub fn softmax_rows<T: Scalar>(x: ArrayView2<T>) -> Array2<T> {
    softmax(x, Axis(1))
}

#[derive(Clone, Debug, PartialEq)]
pub struct CmaOutput<T> {
    /// `nq × dv` attended values.
    pub output: Array2<T>,
    /// `nq × nk` attention weights; each row sums to one.
    pub weights: Array2<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CmaGrads<T> {
    pub dq: Array2<T>,
    pub dk: Array2<T>,
    pub dv: Array2<T>,
}

/// Cross-modal attention `softmax(Q Kᵀ / √d_k) V` for one query sequence
/// against one stacked key/value sequence.
pub fn cma_forward<T: Scalar>(
    q: ArrayView2<T>,
    k: ArrayView2<T>,
    v: ArrayView2<T>,
) -> Result<CmaOutput<T>, NnError> {
    if q.ncols() != k.ncols() {
        return Err(shape_err(
            "cma",
            format!("query width {} != key width {}", q.ncols(), k.ncols()),
        ));
    }
    if k.nrows() != v.nrows() || k.nrows() == 0 {
        return Err(shape_err(
            "cma",
            format!("{} key rows vs {} value rows", k.nrows(), v.nrows()),
        ));
    }
    let scale = T::one() / cast::<T>(k.ncols() as f64).sqrt();
    let scores = q.dot(&k.t()) * scale;
    let weights = softmax_rows(scores.view());
    let output = weights.dot(&v);
    Ok(CmaOutput { output, weights })
}

/// Gradients of a scalar loss with respect to Q, K and V, given the upstream
/// gradient of the attention output and the forward attention weights.
pub fn cma_backward<T: Scalar>(
    q: ArrayView2<T>,
    k: ArrayView2<T>,
    v: ArrayView2<T>,
    weights: ArrayView2<T>,
    d_output: ArrayView2<T>,
) -> CmaGrads<T> {
    let scale = T::one() / cast::<T>(k.ncols() as f64).sqrt();
    let d_weights = d_output.dot(&v.t());
    let dv = weights.t().dot(&d_output);
    let mut d_scores = Array2::zeros(weights.raw_dim());
    for ((mut ds, w), dw) in d_scores
        .rows_mut()
        .into_iter()
        .zip(weights.rows())
        .zip(d_weights.rows())
    {
        let dot = w.dot(&dw);
        Zip::from(&mut ds)
            .and(&w)
            .and(&dw)
            .for_each(|s, &wi, &dwi| *s = wi * (dwi - dot) * scale);
    }
    CmaGrads {
        dq: d_scores.dot(&k),
        dk: d_scores.t().dot(&q),
        dv,
    }
}

pub fn relu<T: Scalar>(x: &mut Array2<T>) {
    x.mapv_inplace(|v| v.max(T::zero()));
}

/// Zeroes `dy` where the forward ReLU output was not positive.
pub fn relu_backward<T: Scalar>(dy: &mut Array2<T>, activated: ArrayView2<T>) {
    Zip::from(dy).and(&activated).for_each(|g, &a| {
        if a <= T::zero() {
            *g = T::zero();
        }
    });
}

/// Inverted dropout. Returns the output and, in train mode with a nonzero
/// rate, the per-element scale mask (`0` or `1/(1-rate)`) for the backward
/// pass.
pub fn dropout_apply<T: Scalar, R: Rng + ?Sized>(
    x: ArrayView2<T>,
    rate: f64,
    mode: Mode,
    rng: &mut R,
) -> Result<(Array2<T>, Option<Array2<T>>), NnError> {
    if !(0.0..1.0).contains(&rate) {
        return Err(NnError::BadDropout(rate));
    }
    if mode == Mode::Eval || rate == 0.0 {
        return Ok((x.to_owned(), None));
    }
    let keep_scale: T = cast(1.0 / (1.0 - rate));
    let mask = Array2::from_shape_simple_fn(x.raw_dim(), || {
        if rng.random::<f64>() < rate {
            T::zero()
        } else {
            keep_scale
        }
    });
    Ok((&x * &mask, Some(mask)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array1};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn softmax_examples() {
        let s = softmax(array![0.0f64, 0.0].view(), Axis(0));
        assert_eq!(s, array![0.5, 0.5]);
        assert_eq!(softmax(array![3.7f64].view(), Axis(0)), array![1.0]);
        let big = softmax(array![1000.0f32, 1000.0].view(), Axis(0));
        assert_eq!(big, array![0.5, 0.5]);
        let cols = softmax(array![[0.0f64, 1.0], [0.0, 1.0]].view(), Axis(0));
        assert_eq!(cols, array![[0.5, 0.5], [0.5, 0.5]]);
    }

    /// Scalar re-derivation of the attention formula, one entry at a time.
    fn scalar_cma(q: &Array2<f64>, k: &Array2<f64>, v: &Array2<f64>) -> (Array2<f64>, Array2<f64>) {
        let d = q.ncols() as f64;
        let mut w = Array2::zeros((q.nrows(), k.nrows()));
        let mut out = Array2::zeros((q.nrows(), v.ncols()));
        for i in 0..q.nrows() {
            let mut scores = Vec::new();
            for j in 0..k.nrows() {
                let mut s = 0.0;
                for c in 0..q.ncols() {
                    s += q[[i, c]] * k[[j, c]];
                }
                scores.push(s / d.sqrt());
            }
            let denom: f64 = scores.iter().map(|s| s.exp()).sum();
            for j in 0..k.nrows() {
                w[[i, j]] = scores[j].exp() / denom;
                for c in 0..v.ncols() {
                    out[[i, c]] += w[[i, j]] * v[[j, c]];
                }
            }
        }
        (out, w)
    }

    #[test]
    fn cma_single_key_returns_value() {
        let q = array![[0.3f64, -1.2, 4.0]];
        let k = array![[2.0, 1.0, -0.5]];
        let v = array![[7.0, -3.0, 0.25]];
        let out = cma_forward(q.view(), k.view(), v.view()).unwrap();
        assert_eq!(out.output, v);
        assert_eq!(out.weights, array![[1.0]]);
    }

    #[test]
    fn cma_identical_keys_average_values() {
        let q = array![[0.3f64, -1.2]];
        let k = array![[2.0, 1.0], [2.0, 1.0]];
        let v = array![[1.0, 3.0], [5.0, -1.0]];
        let out = cma_forward(q.view(), k.view(), v.view()).unwrap();
        assert_eq!(out.output, array![[3.0, 1.0]]);
    }

    #[test]
    fn cma_two_dim_worked_example() {
        let q = array![[1.0f64, 0.0]];
        let k = array![[1.0, 0.0], [0.0, 1.0]];
        let v = k.clone();
        let out = cma_forward(q.view(), k.view(), v.view()).unwrap();
        let (want_out, want_w) = scalar_cma(&q, &k, &v);
        assert!((out.weights[[0, 0]] - 0.6698).abs() < 1e-4);
        assert!((out.weights[[0, 1]] - 0.3302).abs() < 1e-4);
        for (a, b) in out.output.iter().zip(want_out.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
        for (a, b) in out.weights.iter().zip(want_w.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn cma_shape_errors() {
        let a = Array2::<f64>::zeros((1, 3));
        let b = Array2::<f64>::zeros((2, 4));
        assert!(cma_forward(a.view(), b.view(), b.view()).is_err());
        let k = Array2::<f64>::zeros((2, 3));
        let v = Array2::<f64>::zeros((3, 3));
        assert!(cma_forward(a.view(), k.view(), v.view()).is_err());
        let empty = Array2::<f64>::zeros((0, 3));
        assert!(cma_forward(a.view(), empty.view(), empty.view()).is_err());
    }

    #[test]
    fn dropout_modes() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = Array2::from_elem((3, 4), 2.0f64);
        let (y, mask) = dropout_apply(x.view(), 0.5, Mode::Eval, &mut rng).unwrap();
        assert_eq!(y, x);
        assert!(mask.is_none());
        let (y, _) = dropout_apply(x.view(), 0.0, Mode::Train, &mut rng).unwrap();
        assert_eq!(y, x);
        assert!(dropout_apply(x.view(), 1.0, Mode::Train, &mut rng).is_err());
        assert!(dropout_apply(x.view(), -0.1, Mode::Eval, &mut rng).is_err());
    }

    #[test]
    fn dropout_is_unbiased() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let x = Array2::<f64>::ones((1, 100_000));
        let (y, _) = dropout_apply(x.view(), 0.5, Mode::Train, &mut rng).unwrap();
        let mean = y.mean().unwrap();
        assert!((0.98..=1.02).contains(&mean), "mean {mean}");
        let mut a = ChaCha8Rng::seed_from_u64(9);
        let mut b = ChaCha8Rng::seed_from_u64(9);
        let ya = dropout_apply(x.view(), 0.3, Mode::Train, &mut a).unwrap().0;
        let yb = dropout_apply(x.view(), 0.3, Mode::Train, &mut b).unwrap().0;
        assert_eq!(ya, yb);
    }

    fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = Array2<f64>> {
        proptest::collection::vec(-3.0f64..3.0, rows * cols)
            .prop_map(move |v| Array2::from_shape_vec((rows, cols), v).unwrap())
    }

    proptest! {
        #[test]
        fn cma_rows_are_distributions(q in matrix(3, 4), k in matrix(5, 4), v in matrix(5, 2)) {
            let out = cma_forward(q.view(), k.view(), v.view()).unwrap();
            for row in out.weights.rows() {
                prop_assert!(row.iter().all(|w| *w >= 0.0));
                prop_assert!((row.sum() - 1.0).abs() < 1e-6);
            }
        }

        #[test]
        fn cma_joint_permutation_invariance(q in matrix(2, 3), k in matrix(4, 3), v in matrix(4, 3), shift in 1usize..4) {
            let perm: Vec<usize> = (0..4).map(|i| (i + shift) % 4).collect();
            let kp = k.select(Axis(0), &perm);
            let vp = v.select(Axis(0), &perm);
            let a = cma_forward(q.view(), k.view(), v.view()).unwrap();
            let b = cma_forward(q.view(), kp.view(), vp.view()).unwrap();
            for (x, y) in a.output.iter().zip(b.output.iter()) {
                prop_assert!((x - y).abs() < 1e-6);
            }
            for (x, y) in a.weights.select(Axis(1), &perm).iter().zip(b.weights.iter()) {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }

        #[test]
        fn softmax_shift_invariance(x in proptest::collection::vec(-50.0f64..50.0, 1..10), c in -100.0f64..100.0) {
            let x = Array1::from(x);
            let a = softmax(x.view(), Axis(0));
            let b = softmax((&x + c).view(), Axis(0));
            for (p, q) in a.iter().zip(b.iter()) {
                prop_assert!((p - q).abs() < 1e-12);
            }
        }
    }
}
