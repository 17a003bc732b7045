use ndarray::{ArrayView2, ArrayViewMut2};
use rand::Rng;

use super::{cast, Scalar};

/// Handle to one registered tensor.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(pub(crate) usize);

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParamSpec {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub offset: usize,
    /// Weight matrices take part in the elastic-net penalty; biases do not.
    pub regularized: bool,
}

impl ParamSpec {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

/// Named 2-D tensors stored contiguously, with a gradient buffer of the same
/// layout. Biases are stored as `1×n` tensors.
#[derive(Clone, Debug, PartialEq)]
pub struct ParameterSet<T> {
    specs: Vec<ParamSpec>,
    values: Vec<T>,
    grads: Vec<T>,
}

impl<T: Scalar> Default for ParameterSet<T> {
    fn default() -> Self {
        Self::new()
    }
}

/// Read-only view of parameter values, used by forward passes.
#[derive(Clone, Copy)]
pub struct ParamValues<'a, T> {
    specs: &'a [ParamSpec],
    data: &'a [T],
}

/// Mutable view of the gradient buffer, used by backward passes.
pub struct ParamGrads<'a, T> {
    specs: &'a [ParamSpec],
    data: &'a mut [T],
}

impl<'a, T: Scalar> ParamValues<'a, T> {
    pub fn get(&self, id: ParamId) -> ArrayView2<'a, T> {
        let spec = &self.specs[id.0];
        ArrayView2::from_shape((spec.rows, spec.cols), &self.data[spec.range()]).unwrap()
    }
}

impl<T: Scalar> ParamGrads<'_, T> {
    pub fn get_mut(&mut self, id: ParamId) -> ArrayViewMut2<'_, T> {
        let spec = &self.specs[id.0];
        ArrayViewMut2::from_shape((spec.rows, spec.cols), &mut self.data[spec.range()]).unwrap()
    }
}

impl<T: Scalar> ParameterSet<T> {
    pub fn new() -> Self {
        Self {
            specs: Vec::new(),
            values: Vec::new(),
            grads: Vec::new(),
        }
    }

    /// Registers a zero-initialised tensor. Names must be unique.
    pub fn add(&mut self, name: impl Into<String>, rows: usize, cols: usize, regularized: bool) -> ParamId {
        let name = name.into();
        assert!(self.id(&name).is_none(), "duplicate parameter name {name}");
        let offset = self.values.len();
        self.specs.push(ParamSpec {
            name,
            rows,
            cols,
            offset,
            regularized,
        });
        self.values.resize(offset + rows * cols, T::zero());
        self.grads.resize(offset + rows * cols, T::zero());
        ParamId(self.specs.len() - 1)
    }

    /// Total number of scalar parameters.
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn specs(&self) -> &[ParamSpec] {
        &self.specs
    }

    pub fn spec(&self, id: ParamId) -> &ParamSpec {
        &self.specs[id.0]
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.specs.iter().position(|s| s.name == name).map(ParamId)
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.specs.len()).map(ParamId)
    }

    pub fn values(&self) -> ParamValues<'_, T> {
        ParamValues {
            specs: &self.specs,
            data: &self.values,
        }
    }

    pub fn split_mut(&mut self) -> (ParamValues<'_, T>, ParamGrads<'_, T>) {
        (
            ParamValues {
                specs: &self.specs,
                data: &self.values,
            },
            ParamGrads {
                specs: &self.specs,
                data: &mut self.grads,
            },
        )
    }

    pub fn value(&self, id: ParamId) -> ArrayView2<'_, T> {
        self.values().get(id)
    }

    pub fn value_mut(&mut self, id: ParamId) -> ArrayViewMut2<'_, T> {
        let spec = &self.specs[id.0];
        ArrayViewMut2::from_shape((spec.rows, spec.cols), &mut self.values[spec.range()]).unwrap()
    }

    pub fn grad(&self, id: ParamId) -> ArrayView2<'_, T> {
        let spec = &self.specs[id.0];
        ArrayView2::from_shape((spec.rows, spec.cols), &self.grads[spec.range()]).unwrap()
    }

    pub fn flat_values(&self) -> &[T] {
        &self.values
    }

    pub fn flat_values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub fn flat_grads(&self) -> &[T] {
        &self.grads
    }

    pub fn flat_grads_mut(&mut self) -> &mut [T] {
        &mut self.grads
    }

    /// Values and gradients together, for optimizer updates.
    pub fn values_and_grads_mut(&mut self) -> (&mut [T], &[T]) {
        (&mut self.values, &self.grads)
    }

    /// Read-only values next to the writable gradient buffer.
    pub fn values_with_grads_mut(&mut self) -> (&[T], &mut [T]) {
        (&self.values, &mut self.grads)
    }

    pub fn zero_grads(&mut self) {
        self.grads.iter_mut().for_each(|g| *g = T::zero());
    }

    /// Fills a tensor with `U(-bound, bound)` samples drawn in f64, so an
    /// f32 and an f64 model built from the same seed agree after casting.
    pub fn fill_uniform<R: Rng + ?Sized>(&mut self, id: ParamId, bound: f64, rng: &mut R) {
        let range = self.specs[id.0].range();
        for v in &mut self.values[range] {
            *v = cast(rng.random_range(-bound..=bound));
        }
    }

    pub fn fill(&mut self, id: ParamId, value: f64) {
        let range = self.specs[id.0].range();
        self.values[range].iter_mut().for_each(|v| *v = cast(value));
    }

    /// Same layout with every value converted to another scalar type.
    pub fn cast<U: Scalar>(&self) -> ParameterSet<U> {
        let conv = |v: &T| cast::<U>(v.to_f64().unwrap());
        ParameterSet {
            specs: self.specs.clone(),
            values: self.values.iter().map(conv).collect(),
            grads: self.grads.iter().map(conv).collect(),
        }
    }

    /// Copies values of every same-named, same-shaped tensor from `other`.
    /// Returns the number of tensors copied.
    pub fn copy_matching_from(&mut self, other: &ParameterSet<T>) -> usize {
        let mut copied = 0;
        for i in 0..self.specs.len() {
            let spec = self.specs[i].clone();
            if let Some(oid) = other.id(&spec.name) {
                let ospec = other.spec(oid);
                if ospec.rows == spec.rows && ospec.cols == spec.cols {
                    self.values[spec.range()].copy_from_slice(&other.values[ospec.range()]);
                    copied += 1;
                }
            }
        }
        copied
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_and_lookup() {
        let mut ps = ParameterSet::<f64>::new();
        let w = ps.add("w", 2, 3, true);
        let b = ps.add("b", 1, 3, false);
        assert_eq!(ps.len(), 9);
        assert_eq!(ps.id("b"), Some(b));
        ps.value_mut(w)[[1, 2]] = 4.0;
        assert_eq!(ps.flat_values()[5], 4.0);
        let (vals, mut grads) = ps.split_mut();
        grads.get_mut(b)[[0, 1]] = vals.get(w)[[1, 2]];
        assert_eq!(ps.grad(b)[[0, 1]], 4.0);
        assert_eq!(ps.grad(w).dim(), ps.value(w).dim());
    }

    #[test]
    #[should_panic(expected = "duplicate parameter name")]
    fn names_are_unique() {
        let mut ps = ParameterSet::<f32>::new();
        ps.add("w", 1, 1, true);
        ps.add("w", 1, 1, true);
    }
}
