//! Named parameter storage and seeded initialization.

use crate::scalar::Scalar;
use crate::tensor::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::sync::Arc;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(pub usize);

/// Trainable tensors in creation order.
#[derive(Clone, Debug, Default)]
pub struct ParamStore<T> {
    names: Vec<String>,
    values: Vec<Arc<Tensor<T>>>,
}

impl<T: Scalar> ParamStore<T> {
    pub fn new() -> Self {
        Self { names: Vec::new(), values: Vec::new() }
    }

    pub fn push(&mut self, name: impl Into<String>, value: Tensor<T>) -> ParamId {
        self.names.push(name.into());
        self.values.push(Arc::new(value));
        ParamId(self.values.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn value(&self, id: ParamId) -> &Tensor<T> {
        &self.values[id.0]
    }

    pub(crate) fn value_arc(&self, id: ParamId) -> Arc<Tensor<T>> {
        Arc::clone(&self.values[id.0])
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        Arc::make_mut(&mut self.values[id.0])
    }

    pub fn set(&mut self, id: ParamId, value: Tensor<T>) {
        assert_eq!(value.shape(), self.values[id.0].shape(), "parameter {} shape", self.names[id.0]);
        self.values[id.0] = Arc::new(value);
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &str, &Tensor<T>)> {
        self.names.iter().zip(&self.values).enumerate().map(|(i, (n, v))| (ParamId(i), n.as_str(), &**v))
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    /// Number of trainable scalars.
    pub fn count(&self) -> usize {
        self.values.iter().map(|v| v.len()).sum()
    }

    pub fn cast<U: Scalar>(&self) -> ParamStore<U> {
        ParamStore { names: self.names.clone(), values: self.values.iter().map(|v| Arc::new(v.cast())).collect() }
    }

    /// Shapes in store order, for layout comparisons.
    pub fn shapes(&self) -> Vec<Vec<usize>> {
        self.values.iter().map(|v| v.shape().to_vec()).collect()
    }

    /// All values flattened in store order.
    pub fn flatten(&self) -> Vec<T> {
        self.values.iter().flat_map(|v| v.data().iter().copied()).collect()
    }
}

/// Allocates parameters with seeded fan-in–scaled uniform weights and zero biases.
pub struct ParamBuilder {
    store: ParamStore<f64>,
    rng: ChaCha8Rng,
    slope: f64,
    prefix: Vec<String>,
}

impl ParamBuilder {
    /// `slope` is the leaky-rectifier slope used for the gain.
    pub fn new(seed: u64, slope: f64) -> Self {
        Self { store: ParamStore::new(), rng: ChaCha8Rng::seed_from_u64(seed), slope, prefix: Vec::new() }
    }

    pub fn scoped<R>(&mut self, name: &str, f: impl FnOnce(&mut Self) -> R) -> R {
        self.prefix.push(name.to_string());
        let r = f(self);
        self.prefix.pop();
        r
    }

    fn full_name(&self, leaf: &str) -> String {
        let mut s = self.prefix.join(".");
        if !s.is_empty() {
            s.push('.');
        }
        s.push_str(leaf);
        s
    }

    /// Uniform on `±sqrt(6 / ((1 + slope²) · fan_in))`.
    pub fn weight(&mut self, leaf: &str, shape: &[usize], fan_in: usize) -> ParamId {
        let bound = (6.0 / ((1.0 + self.slope * self.slope) * fan_in as f64)).sqrt();
        let n: usize = shape.iter().product();
        let data: Vec<f64> = (0..n).map(|_| self.rng.random_range(-bound..bound)).collect();
        let name = self.full_name(leaf);
        self.store.push(name, Tensor::from_vec(shape, data).unwrap())
    }

    pub fn zeros(&mut self, leaf: &str, shape: &[usize]) -> ParamId {
        let name = self.full_name(leaf);
        self.store.push(name, Tensor::zeros(shape))
    }

    pub fn finish<T: Scalar>(self) -> ParamStore<T> {
        self.store.cast()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeded_init_is_deterministic() {
        let build = || {
            let mut b = ParamBuilder::new(3, 0.01);
            b.scoped("enc", |b| b.weight("w", &[4, 2, 3, 3], 18));
            b.finish::<f64>()
        };
        let (a, b) = (build(), build());
        assert_eq!(a.flatten(), b.flatten());
        assert_eq!(a.names(), &["enc.w".to_string()]);
        let bound = (6.0f64 / (1.0001 * 18.0)).sqrt();
        assert!(a.flatten().iter().all(|v| v.abs() < bound));
    }

    #[test]
    fn value_mut_does_not_alias_clones() {
        let mut s = ParamStore::<f32>::new();
        let id = s.push("p", Tensor::zeros(&[2]));
        let snapshot = s.clone();
        s.value_mut(id).data_mut()[0] = 1.0;
        assert_eq!(snapshot.value(id).data()[0], 0.0);
    }
}
