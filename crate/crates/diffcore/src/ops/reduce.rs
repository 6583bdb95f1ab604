use crate::ops::Op;
use crate::tape::Node;
use crate::{lit, Element, Result, Tape, Tensor, TensorError};

impl<E: Element> Tape<E> {
    /// Sum of all elements, as a one-element tensor.
    pub fn sum_all(&self, a: &Tensor<E>) -> Tensor<E> {
        let s = a.data().iter().copied().sum();
        self.emit(vec![a.clone()], vec![1], vec![s], Op::SumAll)
    }

    pub fn mean_all(&self, a: &Tensor<E>) -> Tensor<E> {
        let s = self.sum_all(a);
        self.scale(&s, E::one() / lit::<E>(a.numel() as f64))
    }

    /// Sum along one axis; that axis is removed from the shape (a rank-1
    /// input reduces to shape `[1]`).
    pub fn sum_axis(&self, a: &Tensor<E>, axis: usize) -> Result<Tensor<E>> {
        let shape = a.shape();
        if axis >= shape.len() {
            return Err(TensorError::BadAxis { axis, shape: shape.to_vec() });
        }
        let mut out_shape: Vec<usize> = shape.to_vec();
        out_shape.remove(axis);
        if out_shape.is_empty() {
            out_shape.push(1);
        }
        let outer: usize = shape[..axis].iter().product();
        let inner: usize = shape[axis + 1..].iter().product();
        let axis_len = shape[axis];
        let src = a.data();
        let mut out = vec![E::zero(); outer * inner];
        for o in 0..outer {
            for i in 0..axis_len {
                let base = (o * axis_len + i) * inner;
                let dst = &mut out[o * inner..(o + 1) * inner];
                for j in 0..inner {
                    dst[j] = dst[j] + src[base + j];
                }
            }
        }
        Ok(self.emit(vec![a.clone()], out_shape, out, Op::SumAxis { axis }))
    }

    pub fn mean_axis(&self, a: &Tensor<E>, axis: usize) -> Result<Tensor<E>> {
        let n = a.shape()[axis];
        let s = self.sum_axis(a, axis)?;
        Ok(self.scale(&s, E::one() / lit::<E>(n as f64)))
    }
}

pub(crate) fn backward<E: Element>(node: &Node<E>, dout: &[E]) -> Vec<Option<Vec<E>>> {
    let a = &node.inputs[0];
    match &node.op {
        Op::SumAll => {
            let d = dout[0];
            vec![Some(vec![d; a.numel()])]
        }
        Op::SumAxis { axis } => {
            let shape = a.shape();
            let outer: usize = shape[..*axis].iter().product();
            let inner: usize = shape[*axis + 1..].iter().product();
            let axis_len = shape[*axis];
            let mut da = vec![E::zero(); a.numel()];
            for o in 0..outer {
                let src = &dout[o * inner..(o + 1) * inner];
                for i in 0..axis_len {
                    let base = (o * axis_len + i) * inner;
                    da[base..base + inner].copy_from_slice(src);
                }
            }
            vec![Some(da)]
        }
        _ => unreachable!(),
    }
}
