use ndarray::{Array2, ArrayView2, Axis};
use rand::Rng;

use super::{shape_err, NnError, ParamGrads, ParamId, ParamValues, ParameterSet, Scalar};

/// `y = x W + b` with `W` stored as `in × out`.
pub fn linear_forward<T: Scalar>(
    x: ArrayView2<T>,
    w: ArrayView2<T>,
    b: ArrayView2<T>,
) -> Result<Array2<T>, NnError> {
    if x.ncols() != w.nrows() || b.ncols() != w.ncols() || b.nrows() != 1 {
        return Err(shape_err(
            "linear",
            format!(
                "x {:?}, w {:?}, b {:?}",
                x.dim(),
                w.dim(),
                b.dim()
            ),
        ));
    }
    Ok(x.dot(&w) + &b)
}

/// Fully connected layer registered in a [`ParameterSet`] as
/// `<name>.weight` and `<name>.bias`.
#[derive(Clone, Debug, PartialEq)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Linear {
    pub fn new<T: Scalar>(params: &mut ParameterSet<T>, name: &str, in_dim: usize, out_dim: usize) -> Self {
        Self {
            weight: params.add(format!("{name}.weight"), in_dim, out_dim, true),
            bias: params.add(format!("{name}.bias"), 1, out_dim, false),
            in_dim,
            out_dim,
        }
    }

    /// Uniform `±1/√in` for weight and bias.
    pub fn init<T: Scalar, R: Rng + ?Sized>(&self, params: &mut ParameterSet<T>, rng: &mut R) {
        let bound = 1.0 / (self.in_dim as f64).sqrt();
        params.fill_uniform(self.weight, bound, rng);
        params.fill_uniform(self.bias, bound, rng);
    }

    pub fn param_count(&self) -> usize {
        self.in_dim * self.out_dim + self.out_dim
    }

    pub fn forward<T: Scalar>(&self, vals: ParamValues<'_, T>, x: ArrayView2<T>) -> Result<Array2<T>, NnError> {
        linear_forward(x, vals.get(self.weight), vals.get(self.bias))
    }

    /// Accumulates weight and bias gradients; returns `dx` when asked.
    pub fn backward<T: Scalar>(
        &self,
        vals: ParamValues<'_, T>,
        grads: &mut ParamGrads<'_, T>,
        x: ArrayView2<T>,
        dy: ArrayView2<T>,
        need_dx: bool,
    ) -> Option<Array2<T>> {
        grads.get_mut(self.weight).scaled_add(T::one(), &x.t().dot(&dy));
        let db = dy.sum_axis(Axis(0));
        let mut gb = grads.get_mut(self.bias);
        gb.row_mut(0).scaled_add(T::one(), &db);
        need_dx.then(|| dy.dot(&vals.get(self.weight).t()))
    }
}
