use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Running sum of micro-batch gradients; yields their mean.
#[derive(Clone, Debug, Default)]
pub struct GradAccumulator<T> {
    sum: Option<Vec<Tensor<T>>>,
    count: usize,
}

impl<T: Scalar> GradAccumulator<T> {
    pub fn new() -> Self {
        Self { sum: None, count: 0 }
    }

    pub fn add(&mut self, grads: Vec<Tensor<T>>) {
        match &mut self.sum {
            None => self.sum = Some(grads),
            Some(sum) => {
                for (s, g) in sum.iter_mut().zip(&grads) {
                    s.add_assign(g);
                }
            }
        }
        self.count += 1;
    }

    pub fn len(&self) -> usize {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    /// Mean of the accumulated gradients; resets the accumulator.
    pub fn take_mean(&mut self) -> Option<Vec<Tensor<T>>> {
        let mut sum = self.sum.take()?;
        let scale = T::one() / T::lit(self.count as f64);
        for s in &mut sum {
            s.scale(scale);
        }
        self.count = 0;
        Some(sum)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn averages_micro_batches() {
        let mut acc = GradAccumulator::<f64>::new();
        assert!(acc.take_mean().is_none());
        acc.add(vec![Tensor::scalar(1.0)]);
        acc.add(vec![Tensor::scalar(3.0)]);
        assert_eq!(acc.len(), 2);
        assert_eq!(acc.take_mean().unwrap()[0].data(), &[2.0]);
        assert!(acc.is_empty());
    }
}
