use crate::ops::Op;
use crate::tape::Node;
use crate::tensor::{numel, strides};
use crate::{Element, Result, Tape, Tensor, TensorError};

impl<E: Element> Tape<E> {
    /// Same buffer under a new shape with equal element count.
    pub fn reshape(&self, a: &Tensor<E>, shape: &[usize]) -> Result<Tensor<E>> {
        if numel(shape) != a.numel() {
            return Err(TensorError::BadLength { shape: shape.to_vec(), len: a.numel() });
        }
        Ok(self.emit(vec![a.clone()], shape.to_vec(), a.data().to_vec(), Op::Reshape))
    }

    /// Reorder axes; `perm` must be a permutation of `0..rank`.
    pub fn permute(&self, a: &Tensor<E>, perm: &[usize]) -> Result<Tensor<E>> {
        let rank = a.shape().len();
        let mut seen = vec![false; rank];
        if perm.len() != rank || perm.iter().any(|&p| p >= rank || std::mem::replace(&mut seen[p], true)) {
            return Err(TensorError::Invalid { op: "permute", msg: format!("bad permutation {perm:?} for rank {rank}") });
        }
        let out_shape: Vec<usize> = perm.iter().map(|&p| a.shape()[p]).collect();
        let data = permute_data(a.data(), a.shape(), perm);
        Ok(self.emit(vec![a.clone()], out_shape, data, Op::Permute(perm.to_vec())))
    }

    /// 2-D transpose.
    pub fn transpose(&self, a: &Tensor<E>) -> Result<Tensor<E>> {
        if a.shape().len() != 2 {
            return Err(TensorError::BadRank { op: "transpose", expected: "rank-2 tensor", shape: a.shape().to_vec() });
        }
        self.permute(a, &[1, 0])
    }

    /// Contiguous slice `start..start+len` along one axis.
    pub fn narrow(&self, a: &Tensor<E>, axis: usize, start: usize, len: usize) -> Result<Tensor<E>> {
        let shape = a.shape();
        if axis >= shape.len() {
            return Err(TensorError::BadAxis { axis, shape: shape.to_vec() });
        }
        if start + len > shape[axis] {
            return Err(TensorError::Invalid {
                op: "narrow",
                msg: format!("range {start}..{} exceeds axis {axis} of {shape:?}", start + len),
            });
        }
        let mut out_shape = shape.to_vec();
        out_shape[axis] = len;
        let outer: usize = shape[..axis].iter().product();
        let inner: usize = shape[axis + 1..].iter().product();
        let mut data = Vec::with_capacity(numel(&out_shape));
        let src = a.data();
        for o in 0..outer {
            let base = (o * shape[axis] + start) * inner;
            data.extend_from_slice(&src[base..base + len * inner]);
        }
        Ok(self.emit(vec![a.clone()], out_shape, data, Op::Narrow { axis, start }))
    }

    /// Concatenate along `axis`; all other extents must agree.
    pub fn concat(&self, parts: &[&Tensor<E>], axis: usize) -> Result<Tensor<E>> {
        if parts.is_empty() {
            return Err(TensorError::Invalid { op: "concat", msg: "no inputs".into() });
        }
        let first = parts[0].shape();
        if axis >= first.len() {
            return Err(TensorError::BadAxis { axis, shape: first.to_vec() });
        }
        let mut axis_total = 0usize;
        for p in parts {
            let s = p.shape();
            let compatible = s.len() == first.len()
                && s.iter().zip(first).enumerate().all(|(d, (&a, &b))| d == axis || a == b);
            if !compatible {
                return Err(TensorError::ShapeMismatch { op: "concat", lhs: first.to_vec(), rhs: s.to_vec() });
            }
            axis_total += s[axis];
        }
        let mut out_shape = first.to_vec();
        out_shape[axis] = axis_total;
        let outer: usize = first[..axis].iter().product();
        let inner: usize = first[axis + 1..].iter().product();
        let mut data = Vec::with_capacity(numel(&out_shape));
        for o in 0..outer {
            for p in parts {
                let w = p.shape()[axis] * inner;
                data.extend_from_slice(&p.data()[o * w..(o + 1) * w]);
            }
        }
        let inputs: Vec<Tensor<E>> = parts.iter().map(|p| (*p).clone()).collect();
        Ok(self.emit(inputs, out_shape, data, Op::Concat { axis }))
    }
}

fn permute_data<E: Element>(src: &[E], shape: &[usize], perm: &[usize]) -> Vec<E> {
    let rank = shape.len();
    let out_shape: Vec<usize> = perm.iter().map(|&p| shape[p]).collect();
    let in_str = strides(shape);
    let mut src_stride = vec![0usize; rank];
    for d in 0..rank {
        src_stride[d] = in_str[perm[d]];
    }
    let n = numel(shape);
    let mut out = Vec::with_capacity(n);
    let mut idx = vec![0usize; rank];
    let mut off = 0usize;
    for _ in 0..n {
        out.push(src[off]);
        for d in (0..rank).rev() {
            idx[d] += 1;
            off += src_stride[d];
            if idx[d] < out_shape[d] {
                break;
            }
            off -= src_stride[d] * out_shape[d];
            idx[d] = 0;
        }
    }
    out
}

pub(crate) fn backward<E: Element>(node: &Node<E>, dout: &[E]) -> Vec<Option<Vec<E>>> {
    match &node.op {
        Op::Reshape => vec![Some(dout.to_vec())],
        Op::Permute(perm) => {
            let mut inverse = vec![0usize; perm.len()];
            for (d, &p) in perm.iter().enumerate() {
                inverse[p] = d;
            }
            vec![Some(permute_data(dout, node.output.shape(), &inverse))]
        }
        Op::Narrow { axis, start } => {
            let a = &node.inputs[0];
            let shape = a.shape();
            let len = node.output.shape()[*axis];
            let outer: usize = shape[..*axis].iter().product();
            let inner: usize = shape[*axis + 1..].iter().product();
            let mut da = vec![E::zero(); a.numel()];
            for o in 0..outer {
                let dst = (o * shape[*axis] + start) * inner;
                let src = o * len * inner;
                da[dst..dst + len * inner].copy_from_slice(&dout[src..src + len * inner]);
            }
            vec![Some(da)]
        }
        Op::Concat { axis } => {
            let first = node.inputs[0].shape();
            let outer: usize = first[..*axis].iter().product();
            let inner: usize = first[*axis + 1..].iter().product();
            let total_w: usize = node.inputs.iter().map(|p| p.shape()[*axis] * inner).sum();
            let mut grads: Vec<Option<Vec<E>>> =
                node.inputs.iter().map(|p| Some(vec![E::zero(); p.numel()])).collect();
            for o in 0..outer {
                let mut off = o * total_w;
                for (p, g) in node.inputs.iter().zip(grads.iter_mut()) {
                    let w = p.shape()[*axis] * inner;
                    g.as_mut().unwrap()[o * w..(o + 1) * w].copy_from_slice(&dout[off..off + w]);
                    off += w;
                }
            }
            grads
        }
        _ => unreachable!(),
    }
}
