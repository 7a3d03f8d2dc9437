use std::sync::atomic::{AtomicU64, Ordering};

use super::tensor::Tensor;

static NEXT_ID: AtomicU64 = AtomicU64::new(1);

/// Process-unique parameter identity, used to bind a parameter to at most
/// one tape node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(u64);

impl ParamId {
    fn fresh() -> Self {
        Self(NEXT_ID.fetch_add(1, Ordering::Relaxed))
    }
}

/// A named learnable tensor with its own gradient buffer.
///
/// Cloning yields a parameter with the same values and a new identity, so a
/// target-network copy never aliases its source on a tape.
#[derive(Debug)]
pub struct Param {
    id: ParamId,
    name: String,
    value: Tensor,
    grad: Vec<f64>,
}

impl Clone for Param {
    fn clone(&self) -> Self {
        Self {
            id: ParamId::fresh(),
            name: self.name.clone(),
            value: self.value.clone(),
            grad: self.grad.clone(),
        }
    }
}

impl Param {
    pub fn new(name: impl Into<String>, value: Tensor) -> Self {
        let n = value.shape().len();
        Self {
            id: ParamId::fresh(),
            name: name.into(),
            value,
            grad: vec![0.0; n],
        }
    }

    pub fn id(&self) -> ParamId {
        self.id
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn value(&self) -> &Tensor {
        &self.value
    }

    pub fn value_mut(&mut self) -> &mut Tensor {
        &mut self.value
    }

    pub fn grad(&self) -> &[f64] {
        &self.grad
    }

    pub fn len(&self) -> usize {
        self.grad.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grad.is_empty()
    }

    pub fn add_grad(&mut self, g: &[f64]) {
        assert_eq!(g.len(), self.grad.len(), "gradient length for {}", self.name);
        for (a, b) in self.grad.iter_mut().zip(g) {
            *a += b;
        }
    }

    pub fn zero_grad(&mut self) {
        self.grad.iter_mut().for_each(|g| *g = 0.0);
    }

    /// Split borrow for optimizers: values mutable, gradient read-only.
    pub fn value_and_grad_mut(&mut self) -> (&mut [f64], &[f64]) {
        (self.value.data_mut(), &self.grad)
    }
}
