use crate::nn::{cast, ParameterSet, Scalar};

/// Adam with bias correction.
#[derive(Clone, Debug)]
pub struct Adam<T> {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<T>,
    v: Vec<T>,
    t: i32,
}

impl<T: Scalar> Adam<T> {
    pub fn new(lr: f64, size: usize) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![T::zero(); size],
            v: vec![T::zero(); size],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut ParameterSet<T>) {
        self.t += 1;
        let (b1, b2): (T, T) = (cast(self.beta1), cast(self.beta2));
        let (one_b1, one_b2) = (T::one() - b1, T::one() - b2);
        let step: T = cast(self.lr / (1.0 - self.beta1.powi(self.t)));
        let v_corr: T = cast(1.0 / (1.0 - self.beta2.powi(self.t)));
        let eps: T = cast(self.eps);
        let (values, grads) = params.values_and_grads_mut();
        for (((w, &g), m), v) in values.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            *m = b1 * *m + one_b1 * g;
            *v = b2 * *v + one_b2 * g * g;
            *w = *w - step * *m / ((*v * v_corr).sqrt() + eps);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_lr() {
        let mut ps = ParameterSet::<f64>::new();
        let id = ps.add("w", 1, 2, true);
        ps.flat_grads_mut().copy_from_slice(&[3.0, -0.5]);
        let mut adam = Adam::new(0.01, ps.len());
        adam.step(&mut ps);
        let w = ps.value(id);
        assert!((w[[0, 0]] + 0.01).abs() < 1e-9);
        assert!((w[[0, 1]] - 0.01).abs() < 1e-9);
    }

    #[test]
    fn minimises_a_quadratic() {
        let mut ps = ParameterSet::<f64>::new();
        let id = ps.add("w", 1, 1, true);
        ps.fill(id, 5.0);
        let mut adam = Adam::new(0.1, 1);
        for _ in 0..500 {
            let w = ps.flat_values()[0];
            ps.flat_grads_mut()[0] = 2.0 * (w - 1.0);
            adam.step(&mut ps);
        }
        assert!((ps.flat_values()[0] - 1.0).abs() < 1e-3);
    }
}
