use std::cell::RefCell;
use std::collections::HashMap;

use crate::ops::Op;
use crate::{Element, Result, Tensor, TensorError};

pub(crate) struct Node<E: Element> {
    pub inputs: Vec<Tensor<E>>,
    pub output: Tensor<E>,
    pub op: Op<E>,
}

/// Ordered record of executed primitives.
///
/// Every operation goes through a `Tape`. While recording, any operation
/// whose inputs can reach a `requires_grad` leaf is appended as a node;
/// [`Tape::backward`] replays the nodes in strict reverse order, which is a
/// reverse topological order because an operand always exists before the
/// operation that consumes it.
pub struct Tape<E: Element> {
    nodes: RefCell<Vec<Node<E>>>,
    recording: bool,
}

impl<E: Element> Tape<E> {
    /// Tape that records for backward.
    pub fn new() -> Self {
        Tape { nodes: RefCell::new(Vec::new()), recording: true }
    }

    /// Forward-only tape: nothing is recorded, outputs never require grad.
    pub fn inference() -> Self {
        Tape { nodes: RefCell::new(Vec::new()), recording: false }
    }

    pub fn is_recording(&self) -> bool {
        self.recording
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.borrow().len()
    }

    /// Wrap a freshly computed buffer, recording the node when gradients can
    /// flow to it.
    pub(crate) fn emit(&self, inputs: Vec<Tensor<E>>, shape: Vec<usize>, data: Vec<E>, op: Op<E>) -> Tensor<E> {
        let track = self.recording && inputs.iter().any(|t| t.requires_grad());
        let output = Tensor::leaf(shape, data, track);
        if track {
            self.nodes.borrow_mut().push(Node { inputs, output: output.clone(), op });
        }
        output
    }

    /// Accumulate gradients of `loss` into every reachable `requires_grad`
    /// tensor. Repeated calls without [`Tape::reset`] keep accumulating.
    ///
    /// Propagation runs on pass-local buffers so a second call sees the same
    /// upstream values as the first; persistent slots receive each pass's
    /// total exactly once.
    pub fn backward(&self, loss: &Tensor<E>) -> Result<()> {
        if loss.numel() != 1 {
            return Err(TensorError::NonScalarLoss { shape: loss.shape().to_vec() });
        }
        let nodes = self.nodes.borrow();
        let mut local: HashMap<usize, (Tensor<E>, Vec<E>)> = HashMap::new();
        local.insert(loss.key(), (loss.clone(), vec![E::one()]));
        for node in nodes.iter().rev() {
            let dout = match local.get(&node.output.key()) {
                Some((_, g)) => g.clone(),
                None => continue,
            };
            let grads = crate::ops::backward(node, &dout);
            debug_assert_eq!(grads.len(), node.inputs.len());
            for (input, grad) in node.inputs.iter().zip(grads) {
                let g = match grad {
                    Some(g) => g,
                    None => continue,
                };
                if !input.requires_grad() {
                    continue;
                }
                match local.entry(input.key()) {
                    std::collections::hash_map::Entry::Occupied(mut e) => {
                        for (acc, d) in e.get_mut().1.iter_mut().zip(&g) {
                            *acc = *acc + *d;
                        }
                    }
                    std::collections::hash_map::Entry::Vacant(e) => {
                        e.insert((input.clone(), g));
                    }
                }
            }
        }
        for (_, (tensor, grad)) in local {
            if tensor.requires_grad() {
                tensor.accumulate_grad(&grad);
            }
        }
        Ok(())
    }

    /// Clear all recorded nodes and the gradients of every tensor they touch.
    pub fn reset(&self) {
        let mut nodes = self.nodes.borrow_mut();
        for node in nodes.iter() {
            node.output.zero_grad();
            for input in &node.inputs {
                input.zero_grad();
            }
        }
        nodes.clear();
    }
}

impl<E: Element> Default for Tape<E> {
    fn default() -> Self {
        Self::new()
    }
}
