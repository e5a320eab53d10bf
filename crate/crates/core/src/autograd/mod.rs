//! Reverse-mode automatic differentiation over a recording tape.
//!
//! A [`Tape`] records each differentiable op as a node holding a backward
//! closure. When recording is off (inference), ops compute values only and
//! intermediates are released as soon as their [`Var`] handles drop.

pub mod kernels;
mod ops;

use crate::params::{ParamId, ParamStore};
use crate::scalar::Scalar;
use crate::tensor::Tensor;
use std::cell::RefCell;
use std::sync::Arc;

pub use kernels::{ConvGeom, PoolAxes};

pub type BackwardFn<T> = Box<dyn Fn(&Tensor<T>) -> Vec<Option<Tensor<T>>>>;

struct Node<T> {
    inputs: Vec<Option<usize>>,
    backward: Option<BackwardFn<T>>,
}

/// Handle to a value on the tape.
#[derive(Clone)]
pub struct Var<T> {
    value: Arc<Tensor<T>>,
    id: Option<usize>,
}

impl<T: Scalar> Var<T> {
    pub fn value(&self) -> &Tensor<T> {
        &self.value
    }

    pub fn shape(&self) -> &[usize] {
        self.value.shape()
    }

    pub fn dims4(&self) -> (usize, usize, usize, usize) {
        self.value.dims4()
    }

    pub fn tracked(&self) -> bool {
        self.id.is_some()
    }

    pub fn into_value(self) -> Tensor<T> {
        Arc::try_unwrap(self.value).unwrap_or_else(|a| (*a).clone())
    }
}

pub struct Tape<T> {
    nodes: RefCell<Vec<Node<T>>>,
    recording: bool,
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self { nodes: RefCell::new(Vec::new()), recording: true }
    }

    /// A tape that records nothing; every op yields an untracked value.
    pub fn inference() -> Self {
        Self { nodes: RefCell::new(Vec::new()), recording: false }
    }

    pub fn is_recording(&self) -> bool {
        self.recording
    }

    /// A differentiable input.
    pub fn leaf(&self, value: Arc<Tensor<T>>) -> Var<T> {
        if !self.recording {
            return Var { value, id: None };
        }
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node { inputs: Vec::new(), backward: None });
        Var { value, id: Some(nodes.len() - 1) }
    }

    pub fn constant(&self, value: Tensor<T>) -> Var<T> {
        Var { value: Arc::new(value), id: None }
    }

    /// Whether an op over `inputs` must record a backward closure.
    pub fn needs_grad(&self, inputs: &[&Var<T>]) -> bool {
        self.recording && inputs.iter().any(|v| v.id.is_some())
    }

    /// Records a custom op. `backward` maps the output gradient to one
    /// optional gradient per input, in order. Callers should only build the
    /// closure when [`Tape::needs_grad`] holds; otherwise pass `None`.
    pub fn op(&self, value: Tensor<T>, inputs: &[&Var<T>], backward: Option<BackwardFn<T>>) -> Var<T> {
        let value = Arc::new(value);
        match backward {
            Some(bw) if self.needs_grad(inputs) => {
                let mut nodes = self.nodes.borrow_mut();
                nodes.push(Node { inputs: inputs.iter().map(|v| v.id).collect(), backward: Some(bw) });
                Var { value, id: Some(nodes.len() - 1) }
            }
            _ => Var { value, id: None },
        }
    }

    /// Reverse sweep from a scalar output, seeded with gradient 1.
    pub fn backward(&self, output: &Var<T>) -> Gradients<T> {
        let nodes = self.nodes.borrow();
        let mut grads: Vec<Option<Tensor<T>>> = (0..nodes.len()).map(|_| None).collect();
        let Some(root) = output.id else {
            return Gradients { grads };
        };
        grads[root] = Some(Tensor::full(output.shape(), T::one()));
        for id in (0..=root).rev() {
            let Some(bw) = nodes[id].backward.as_ref() else { continue };
            let Some(g) = grads[id].take() else { continue };
            let parent_grads = bw(&g);
            debug_assert_eq!(parent_grads.len(), nodes[id].inputs.len());
            for (input, pg) in nodes[id].inputs.iter().zip(parent_grads) {
                if let (Some(pid), Some(pg)) = (input, pg) {
                    match grads[*pid].as_mut() {
                        Some(acc) => acc.add_assign(&pg),
                        None => grads[*pid] = Some(pg),
                    }
                }
            }
        }
        Gradients { grads }
    }
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

/// Result of a reverse sweep.
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn get(&self, var: &Var<T>) -> Option<&Tensor<T>> {
        var.id.and_then(|id| self.grads.get(id)).and_then(Option::as_ref)
    }
}

/// A tape plus the parameter store its leaves come from. Each parameter is
/// bound to at most one leaf per graph so shared weights accumulate.
pub struct Graph<'p, T: Scalar> {
    pub tape: Tape<T>,
    params: &'p ParamStore<T>,
    bound: RefCell<Vec<Option<Var<T>>>>,
}

impl<'p, T: Scalar> Graph<'p, T> {
    pub fn new(params: &'p ParamStore<T>, recording: bool) -> Self {
        let tape = if recording { Tape::new() } else { Tape::inference() };
        Self { tape, params, bound: RefCell::new(vec![None; params.len()]) }
    }

    pub fn param(&self, id: ParamId) -> Var<T> {
        let mut bound = self.bound.borrow_mut();
        if let Some(v) = &bound[id.0] {
            return v.clone();
        }
        let v = self.tape.leaf(self.params.value_arc(id));
        bound[id.0] = Some(v.clone());
        v
    }

    pub fn input(&self, value: Tensor<T>) -> Var<T> {
        self.tape.constant(value)
    }

    /// Gradient for every parameter in store order; unused parameters get zeros.
    pub fn param_grads(&self, grads: &Gradients<T>) -> Vec<Tensor<T>> {
        let bound = self.bound.borrow();
        (0..self.params.len())
            .map(|i| {
                bound[i]
                    .as_ref()
                    .and_then(|v| grads.get(v).cloned())
                    .unwrap_or_else(|| Tensor::zeros(self.params.value(ParamId(i)).shape()))
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shared_leaf_accumulates() {
        let tape = Tape::<f64>::new();
        let x = tape.leaf(Arc::new(Tensor::from_vec(&[1, 1, 1, 2], vec![1.0, 2.0]).unwrap()));
        let y = tape.add(&x, &x);
        let s = tape.sum(&y);
        let g = tape.backward(&s);
        assert_eq!(g.get(&x).unwrap().data(), &[2.0, 2.0]);
    }

    #[test]
    fn inference_tape_records_nothing() {
        let tape = Tape::<f32>::inference();
        let x = tape.leaf(Arc::new(Tensor::zeros(&[1, 1, 2, 2])));
        let y = tape.sigmoid(&x);
        assert!(!y.tracked());
        assert!(y.value().data().iter().all(|&v| v == 0.5));
    }
}
