use std::cell::RefCell;
use std::collections::HashSet;

use crate::element::Element;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

struct Node<T: Element> {
    output: Tensor<T>,
    backward: Box<dyn Fn(&[T])>,
}

/// Records one forward pass for reverse-mode differentiation.
///
/// Nodes are appended in execution order, so inputs always precede their
/// consumers; the backward sweep walks the list in reverse, guaranteeing a
/// tensor's gradient is complete before its producing rule fires. A tape is
/// confined to one logical thread and is consumed by [`Tape::backward`].
pub struct Tape<T: Element> {
    nodes: RefCell<Vec<Node<T>>>,
    outputs: RefCell<HashSet<u64>>,
    recording: bool,
}

impl<T: Element> Tape<T> {
    /// A recording tape for training or gradient checks.
    pub fn new() -> Self {
        Tape {
            nodes: RefCell::new(Vec::new()),
            outputs: RefCell::new(HashSet::new()),
            recording: true,
        }
    }

    /// A non-recording tape: ops compute forward values only.
    pub fn no_grad() -> Self {
        Tape {
            nodes: RefCell::new(Vec::new()),
            outputs: RefCell::new(HashSet::new()),
            recording: false,
        }
    }

    pub fn is_recording(&self) -> bool {
        self.recording
    }

    pub(crate) fn track(&self, inputs_need_grad: bool) -> bool {
        self.recording && inputs_need_grad
    }

    pub(crate) fn push(&self, output: &Tensor<T>, backward: impl Fn(&[T]) + 'static) {
        self.outputs.borrow_mut().insert(output.id());
        self.nodes.borrow_mut().push(Node {
            output: output.clone(),
            backward: Box::new(backward),
        });
    }

    /// Number of recorded operations.
    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.borrow().is_empty()
    }

    /// Propagates gradients from a scalar seed to every `requires_grad`
    /// leaf reachable from it, then frees the tape.
    ///
    /// Each node fires at most once, after all its output's consumers have
    /// contributed, so every leaf receives its exact total gradient once.
    pub fn backward(&self, seed: &Tensor<T>) -> Result<()> {
        if !seed.is_scalar() {
            return Err(Error::Usage(format!(
                "backward seed must be a scalar, got shape {:?}",
                seed.shape()
            )));
        }
        if !self.outputs.borrow().contains(&seed.id()) {
            return Err(Error::Usage(
                "backward seed is detached from this tape".into(),
            ));
        }
        seed.seed_grad(T::one());

        let nodes = std::mem::take(&mut *self.nodes.borrow_mut());
        self.outputs.borrow_mut().clear();
        for node in nodes.iter().rev() {
            let grad = node.output.grad();
            if let Some(g) = grad {
                (node.backward)(&g);
            }
        }
        Ok(())
    }
}

impl<T: Element> Default for Tape<T> {
    fn default() -> Self {
        Tape::new()
    }
}
