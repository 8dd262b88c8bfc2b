//! Dense-tensor engine with tape-based reverse-mode automatic differentiation.
//!
//! A [`Tensor`] is a row-major n-dimensional array. Ops are methods on
//! [`Tape`]; a recording tape captures one backward rule per op, and
//! [`Tape::backward`] propagates gradients from a scalar seed to every
//! `requires_grad` leaf. Every forward op validates shapes and rejects
//! non-finite outputs.

pub mod ops;
mod tape;
#[cfg(test)]
mod tests;

pub use ops::BnMode;
pub use tape::Tape;

use std::cell::{Ref, RefCell, RefMut};
use std::rc::Rc;
use std::sync::atomic::{AtomicU64, Ordering};

use rand::distributions::{Distribution, Uniform};
use rand::Rng;

use crate::element::Element;
use crate::error::{Error, Result};

static NEXT_ID: AtomicU64 = AtomicU64::new(1);

struct TensorInner<T> {
    id: u64,
    shape: Vec<usize>,
    data: RefCell<Vec<T>>,
    grad: RefCell<Option<Vec<T>>>,
    requires_grad: bool,
}

/// Row-major dense tensor. Cloning is cheap (shared storage).
///
/// Data is immutable during a forward/backward pass; the optimizer and the
/// batch-norm running buffers mutate it explicitly between passes via
/// [`Tensor::data_mut`].
pub struct Tensor<T: Element> {
    inner: Rc<TensorInner<T>>,
}

impl<T: Element> Clone for Tensor<T> {
    fn clone(&self) -> Self {
        Tensor { inner: Rc::clone(&self.inner) }
    }
}

impl<T: Element> Tensor<T> {
    fn new(shape: Vec<usize>, data: Vec<T>, requires_grad: bool) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Tensor {
            inner: Rc::new(TensorInner {
                id: NEXT_ID.fetch_add(1, Ordering::Relaxed),
                shape,
                data: RefCell::new(data),
                grad: RefCell::new(None),
                requires_grad,
            }),
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<T>) -> Result<Self> {
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(Error::dim(
                "from_vec",
                format!("shape {:?} holds {} elements, got {}", shape, numel, data.len()),
            ));
        }
        Ok(Tensor::new(shape.to_vec(), data, false))
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let numel = shape.iter().product();
        Tensor::new(shape.to_vec(), vec![T::zero(); numel], false)
    }

    pub fn full(shape: &[usize], value: T) -> Self {
        let numel = shape.iter().product();
        Tensor::new(shape.to_vec(), vec![value; numel], false)
    }

    /// Scalar tensor (rank 0).
    pub fn scalar(value: T) -> Self {
        Tensor::new(Vec::new(), vec![value], false)
    }

    /// Uniform values in `[-bound, bound]`.
    pub fn rand_uniform<R: Rng>(shape: &[usize], bound: T, rng: &mut R) -> Self {
        let numel = shape.iter().product();
        let dist = Uniform::new_inclusive(-bound, bound);
        let data: Vec<T> = (0..numel).map(|_| dist.sample(rng)).collect();
        Tensor::new(shape.to_vec(), data, false)
    }

    /// Marks this tensor as a gradient leaf (a trainable parameter).
    pub fn requires_grad(self) -> Self {
        if self.inner.requires_grad {
            return self;
        }
        let data = self.inner.data.borrow().clone();
        Tensor::new(self.inner.shape.clone(), data, true)
    }

    pub(crate) fn result(shape: Vec<usize>, data: Vec<T>, requires_grad: bool) -> Self {
        Tensor::new(shape, data, requires_grad)
    }

    pub fn id(&self) -> u64 {
        self.inner.id
    }

    pub fn shape(&self) -> &[usize] {
        &self.inner.shape
    }

    pub fn numel(&self) -> usize {
        self.inner.data.borrow().len()
    }

    pub fn is_scalar(&self) -> bool {
        self.inner.shape.is_empty()
    }

    pub fn needs_grad(&self) -> bool {
        self.inner.requires_grad
    }

    pub fn data(&self) -> Ref<'_, Vec<T>> {
        self.inner.data.borrow()
    }

    /// Direct mutable access to storage, for the optimizer, running
    /// buffers, and finite-difference probes. Never call during a pass.
    pub fn data_mut(&self) -> RefMut<'_, Vec<T>> {
        self.inner.data.borrow_mut()
    }

    pub fn to_vec(&self) -> Vec<T> {
        self.inner.data.borrow().clone()
    }

    /// Value of a scalar tensor.
    pub fn item(&self) -> T {
        debug_assert!(self.is_scalar());
        self.inner.data.borrow()[0]
    }

    pub fn grad(&self) -> Option<Vec<T>> {
        self.inner.grad.borrow().clone()
    }

    pub fn zero_grad(&self) {
        *self.inner.grad.borrow_mut() = None;
    }

    /// Accumulates `delta` into the gradient buffer, allocating zeros on
    /// first touch. Shape of `delta` must equal the tensor's numel.
    pub(crate) fn accumulate_grad(&self, delta: &[T]) {
        let mut slot = self.inner.grad.borrow_mut();
        match slot.as_mut() {
            Some(g) => {
                for (gi, &d) in g.iter_mut().zip(delta) {
                    *gi = *gi + d;
                }
            }
            None => {
                *slot = Some(delta.to_vec());
            }
        }
    }

    pub(crate) fn seed_grad(&self, value: T) {
        let mut slot = self.inner.grad.borrow_mut();
        match slot.as_mut() {
            Some(g) => g[0] = g[0] + value,
            None => *slot = Some(vec![value]),
        }
    }
}

impl<T: Element> std::fmt::Debug for Tensor<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Tensor")
            .field("shape", &self.inner.shape)
            .field("requires_grad", &self.inner.requires_grad)
            .finish()
    }
}

/// Checks all values are finite; errors with the producing op's name.
pub(crate) fn check_finite<T: Element>(op: &'static str, data: &[T]) -> Result<()> {
    for (i, v) in data.iter().enumerate() {
        if !v.is_finite() {
            return Err(Error::NonFinite { op, index: i });
        }
    }
    Ok(())
}
