use std::cell::{Ref, RefCell};
use std::rc::Rc;

use crate::{Element, Result, TensorError};

pub(crate) fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

/// Row-major strides for a shape.
pub(crate) fn strides(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1usize; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * shape[i + 1];
    }
    s
}

struct Inner<E: Element> {
    shape: Vec<usize>,
    data: Rc<Vec<E>>,
    requires_grad: bool,
    grad: RefCell<Option<Vec<E>>>,
}

/// Dense n-dimensional array participating in a gradient tape.
///
/// Cloning is cheap (reference-counted); the value buffer is immutable after
/// creation. Gradients accumulate into an interior slot during
/// [`Tape::backward`](crate::Tape::backward) for every tensor with
/// `requires_grad` set, and only for those.
pub struct Tensor<E: Element>(Rc<Inner<E>>);

impl<E: Element> Clone for Tensor<E> {
    fn clone(&self) -> Self {
        Tensor(Rc::clone(&self.0))
    }
}

impl<E: Element> Tensor<E> {
    pub fn from_vec(shape: &[usize], data: Vec<E>) -> Result<Self> {
        if numel(shape) != data.len() {
            return Err(TensorError::BadLength { shape: shape.to_vec(), len: data.len() });
        }
        Ok(Self::leaf(shape.to_vec(), data, false))
    }

    /// Leaf with `requires_grad` set: gradient accumulates here on backward.
    pub fn param_from_vec(shape: &[usize], data: Vec<E>) -> Result<Self> {
        if numel(shape) != data.len() {
            return Err(TensorError::BadLength { shape: shape.to_vec(), len: data.len() });
        }
        Ok(Self::leaf(shape.to_vec(), data, true))
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::leaf(shape.to_vec(), vec![E::zero(); numel(shape)], false)
    }

    pub fn full(shape: &[usize], value: E) -> Self {
        Self::leaf(shape.to_vec(), vec![value; numel(shape)], false)
    }

    pub fn scalar(value: E) -> Self {
        Self::leaf(vec![1], vec![value], false)
    }

    pub(crate) fn leaf(shape: Vec<usize>, data: Vec<E>, requires_grad: bool) -> Self {
        Tensor(Rc::new(Inner { shape, data: Rc::new(data), requires_grad, grad: RefCell::new(None) }))
    }

    pub(crate) fn from_shared(shape: Vec<usize>, data: Rc<Vec<E>>, requires_grad: bool) -> Self {
        Tensor(Rc::new(Inner { shape, data, requires_grad, grad: RefCell::new(None) }))
    }

    pub fn shape(&self) -> &[usize] {
        &self.0.shape
    }

    pub fn numel(&self) -> usize {
        self.0.data.len()
    }

    pub fn data(&self) -> &[E] {
        &self.0.data
    }

    pub fn requires_grad(&self) -> bool {
        self.0.requires_grad
    }

    /// Same buffer, detached from gradient flow.
    pub fn detach(&self) -> Tensor<E> {
        Tensor::from_shared(self.0.shape.clone(), Rc::clone(&self.0.data), false)
    }

    /// Scalar value of a one-element tensor.
    pub fn item(&self) -> E {
        assert_eq!(self.numel(), 1, "item() on tensor of shape {:?}", self.shape());
        self.0.data[0]
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.0.data.iter().map(|v| v.to_f64().unwrap()).collect()
    }

    pub fn grad(&self) -> Option<Ref<'_, Vec<E>>> {
        let r = self.0.grad.borrow();
        if r.is_some() {
            Some(Ref::map(r, |g| g.as_ref().unwrap()))
        } else {
            None
        }
    }

    pub fn grad_vec(&self) -> Option<Vec<E>> {
        self.0.grad.borrow().clone()
    }

    pub fn zero_grad(&self) {
        *self.0.grad.borrow_mut() = None;
    }

    pub(crate) fn accumulate_grad(&self, delta: &[E]) {
        debug_assert_eq!(delta.len(), self.numel());
        let mut slot = self.0.grad.borrow_mut();
        match slot.as_mut() {
            Some(g) => {
                for (gi, di) in g.iter_mut().zip(delta) {
                    *gi = *gi + *di;
                }
            }
            None => *slot = Some(delta.to_vec()),
        }
    }

    /// Pointer identity (same underlying tensor object).
    pub fn ptr_eq(&self, other: &Tensor<E>) -> bool {
        Rc::ptr_eq(&self.0, &other.0)
    }

    /// Stable identity key for graph bookkeeping.
    pub(crate) fn key(&self) -> usize {
        Rc::as_ptr(&self.0) as usize
    }

    /// Replace the value buffer in place. Only valid for a leaf that no live
    /// tape node references (optimizer updates between steps).
    pub fn update_data(&mut self, f: impl FnOnce(&mut [E])) {
        let inner = Rc::get_mut(&mut self.0).expect("update_data: tensor is aliased by a live tape");
        let data = Rc::get_mut(&mut inner.data).expect("update_data: buffer is shared");
        f(data);
    }
}

impl<E: Element> std::fmt::Debug for Tensor<E> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Tensor<{}>{:?}", E::DTYPE, self.shape())?;
        if self.numel() <= 8 {
            write!(f, " {:?}", self.data())?;
        }
        Ok(())
    }
}

/// Shape produced by broadcasting `a` against `b` (trailing-dimension rule).
pub(crate) fn broadcast_shape(a: &[usize], b: &[usize]) -> Result<Vec<usize>> {
    let n = a.len().max(b.len());
    let mut out = vec![0usize; n];
    for i in 0..n {
        let da = if i < n - a.len() { 1 } else { a[i - (n - a.len())] };
        let db = if i < n - b.len() { 1 } else { b[i - (n - b.len())] };
        if da == db || da == 1 || db == 1 {
            out[i] = da.max(db);
        } else {
            return Err(TensorError::NotBroadcastable { lhs: a.to_vec(), rhs: b.to_vec() });
        }
    }
    Ok(out)
}

/// Strides into `shape` when viewed as `target` (zero stride on broadcast axes).
pub(crate) fn broadcast_strides(shape: &[usize], target: &[usize]) -> Vec<usize> {
    let own = strides(shape);
    let offset = target.len() - shape.len();
    let mut out = vec![0usize; target.len()];
    for i in 0..target.len() {
        if i < offset {
            out[i] = 0;
        } else {
            let d = shape[i - offset];
            out[i] = if d == 1 { 0 } else { own[i - offset] };
        }
    }
    out
}
