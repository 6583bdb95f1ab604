use crate::ops::Op;
use crate::tape::Node;
use crate::tensor::{broadcast_shape, broadcast_strides, numel};
use crate::{lit, Element, Result, Tape, Tensor};

/// Odometer over an output shape yielding flat offsets into two broadcast
/// operands without per-element division.
struct BcIter {
    shape: Vec<usize>,
    idx: Vec<usize>,
    sa: Vec<usize>,
    sb: Vec<usize>,
    a: usize,
    b: usize,
}

impl BcIter {
    fn new(out_shape: &[usize], a_shape: &[usize], b_shape: &[usize]) -> Self {
        BcIter {
            shape: out_shape.to_vec(),
            idx: vec![0; out_shape.len()],
            sa: broadcast_strides(a_shape, out_shape),
            sb: broadcast_strides(b_shape, out_shape),
            a: 0,
            b: 0,
        }
    }

    #[inline]
    fn step(&mut self) {
        for d in (0..self.shape.len()).rev() {
            self.idx[d] += 1;
            self.a += self.sa[d];
            self.b += self.sb[d];
            if self.idx[d] < self.shape[d] {
                return;
            }
            self.a -= self.sa[d] * self.shape[d];
            self.b -= self.sb[d] * self.shape[d];
            self.idx[d] = 0;
        }
    }
}

fn zip_broadcast<E: Element>(a: &Tensor<E>, b: &Tensor<E>, f: impl Fn(E, E) -> E) -> Result<(Vec<usize>, Vec<E>)> {
    let out_shape = broadcast_shape(a.shape(), b.shape())?;
    let n = numel(&out_shape);
    let ad = a.data();
    let bd = b.data();
    let mut out = Vec::with_capacity(n);
    if a.shape() == b.shape() {
        out.extend(ad.iter().zip(bd).map(|(&x, &y)| f(x, y)));
    } else if b.numel() == 1 {
        let y = bd[0];
        out.extend(ad.iter().map(|&x| f(x, y)));
    } else if a.numel() == 1 {
        let x = ad[0];
        out.extend(bd.iter().map(|&y| f(x, y)));
    } else {
        let mut it = BcIter::new(&out_shape, a.shape(), b.shape());
        for _ in 0..n {
            out.push(f(ad[it.a], bd[it.b]));
            it.step();
        }
    }
    Ok((out_shape, out))
}

impl<E: Element> Tape<E> {
    pub fn add(&self, a: &Tensor<E>, b: &Tensor<E>) -> Result<Tensor<E>> {
        let (shape, data) = zip_broadcast(a, b, |x, y| x + y)?;
        Ok(self.emit(vec![a.clone(), b.clone()], shape, data, Op::Add))
    }

    pub fn sub(&self, a: &Tensor<E>, b: &Tensor<E>) -> Result<Tensor<E>> {
        let (shape, data) = zip_broadcast(a, b, |x, y| x - y)?;
        Ok(self.emit(vec![a.clone(), b.clone()], shape, data, Op::Sub))
    }

    /// Elementwise (Hadamard) product with broadcasting.
    pub fn mul(&self, a: &Tensor<E>, b: &Tensor<E>) -> Result<Tensor<E>> {
        let (shape, data) = zip_broadcast(a, b, |x, y| x * y)?;
        Ok(self.emit(vec![a.clone(), b.clone()], shape, data, Op::Mul))
    }

    pub fn div(&self, a: &Tensor<E>, b: &Tensor<E>) -> Result<Tensor<E>> {
        let (shape, data) = zip_broadcast(a, b, |x, y| x / y)?;
        Ok(self.emit(vec![a.clone(), b.clone()], shape, data, Op::Div))
    }

    pub fn neg(&self, a: &Tensor<E>) -> Tensor<E> {
        self.unary(a, Op::Neg, |x| -x)
    }

    /// Subgradient at zero is zero.
    pub fn relu(&self, a: &Tensor<E>) -> Tensor<E> {
        self.unary(a, Op::Relu, |x| if x > E::zero() { x } else { E::zero() })
    }

    pub fn abs(&self, a: &Tensor<E>) -> Tensor<E> {
        self.unary(a, Op::Abs, |x| x.abs())
    }

    pub fn sigmoid(&self, a: &Tensor<E>) -> Tensor<E> {
        self.unary(a, Op::Sigmoid, |x| E::one() / (E::one() + (-x).exp()))
    }

    pub fn exp(&self, a: &Tensor<E>) -> Tensor<E> {
        self.unary(a, Op::Exp, |x| x.exp())
    }

    pub fn ln(&self, a: &Tensor<E>) -> Tensor<E> {
        self.unary(a, Op::Ln, |x| x.ln())
    }

    pub fn sqrt(&self, a: &Tensor<E>) -> Tensor<E> {
        self.unary(a, Op::Sqrt, |x| x.sqrt())
    }

    pub fn sin(&self, a: &Tensor<E>) -> Tensor<E> {
        self.unary(a, Op::Sin, |x| x.sin())
    }

    pub fn cos(&self, a: &Tensor<E>) -> Tensor<E> {
        self.unary(a, Op::Cos, |x| x.cos())
    }

    pub fn recip(&self, a: &Tensor<E>) -> Tensor<E> {
        self.unary(a, Op::Recip, |x| E::one() / x)
    }

    pub fn scale(&self, a: &Tensor<E>, c: E) -> Tensor<E> {
        self.unary(a, Op::Scale(c), |x| x * c)
    }

    pub fn add_scalar(&self, a: &Tensor<E>, c: E) -> Tensor<E> {
        self.unary(a, Op::AddScalar, |x| x + c)
    }

    fn unary(&self, a: &Tensor<E>, op: Op<E>, f: impl Fn(E) -> E) -> Tensor<E> {
        let data = a.data().iter().map(|&x| f(x)).collect();
        self.emit(vec![a.clone()], a.shape().to_vec(), data, op)
    }
}

pub(crate) fn backward_unary<E: Element>(node: &Node<E>, dout: &[E]) -> Vec<Option<Vec<E>>> {
    let x = node.inputs[0].data();
    let y = node.output.data();
    let half = lit::<E>(0.5);
    let grad: Vec<E> = match &node.op {
        Op::Neg => dout.iter().map(|&d| -d).collect(),
        Op::Relu => dout.iter().zip(x).map(|(&d, &xi)| if xi > E::zero() { d } else { E::zero() }).collect(),
        Op::Abs => dout
            .iter()
            .zip(x)
            .map(|(&d, &xi)| {
                if xi > E::zero() {
                    d
                } else if xi < E::zero() {
                    -d
                } else {
                    E::zero()
                }
            })
            .collect(),
        Op::Sigmoid => dout.iter().zip(y).map(|(&d, &yi)| d * yi * (E::one() - yi)).collect(),
        Op::Exp => dout.iter().zip(y).map(|(&d, &yi)| d * yi).collect(),
        Op::Ln => dout.iter().zip(x).map(|(&d, &xi)| d / xi).collect(),
        Op::Sqrt => dout.iter().zip(y).map(|(&d, &yi)| d * half / yi).collect(),
        Op::Sin => dout.iter().zip(x).map(|(&d, &xi)| d * xi.cos()).collect(),
        Op::Cos => dout.iter().zip(x).map(|(&d, &xi)| -d * xi.sin()).collect(),
        Op::Recip => dout.iter().zip(y).map(|(&d, &yi)| -d * yi * yi).collect(),
        Op::Scale(c) => dout.iter().map(|&d| d * *c).collect(),
        Op::AddScalar => dout.to_vec(),
        _ => unreachable!("not a unary op"),
    };
    vec![Some(grad)]
}

pub(crate) fn backward_binary<E: Element>(node: &Node<E>, dout: &[E]) -> Vec<Option<Vec<E>>> {
    let a = &node.inputs[0];
    let b = &node.inputs[1];
    let out_shape = node.output.shape();
    let ad = a.data();
    let bd = b.data();

    let mut da = vec![E::zero(); a.numel()];
    let mut db = vec![E::zero(); b.numel()];

    // Same-shape fast path covers the bulk of training traffic.
    if a.shape() == b.shape() && a.shape() == out_shape {
        match node.op {
            Op::Add => {
                da.copy_from_slice(dout);
                db.copy_from_slice(dout);
            }
            Op::Sub => {
                da.copy_from_slice(dout);
                for (g, &d) in db.iter_mut().zip(dout) {
                    *g = -d;
                }
            }
            Op::Mul => {
                for i in 0..dout.len() {
                    da[i] = dout[i] * bd[i];
                    db[i] = dout[i] * ad[i];
                }
            }
            Op::Div => {
                for i in 0..dout.len() {
                    da[i] = dout[i] / bd[i];
                    db[i] = -dout[i] * ad[i] / (bd[i] * bd[i]);
                }
            }
            _ => unreachable!(),
        }
        return vec![Some(da), Some(db)];
    }

    let mut it = BcIter::new(out_shape, a.shape(), b.shape());
    let n = numel(out_shape);
    match node.op {
        Op::Add => {
            for i in 0..n {
                da[it.a] = da[it.a] + dout[i];
                db[it.b] = db[it.b] + dout[i];
                it.step();
            }
        }
        Op::Sub => {
            for i in 0..n {
                da[it.a] = da[it.a] + dout[i];
                db[it.b] = db[it.b] - dout[i];
                it.step();
            }
        }
        Op::Mul => {
            for i in 0..n {
                da[it.a] = da[it.a] + dout[i] * bd[it.b];
                db[it.b] = db[it.b] + dout[i] * ad[it.a];
                it.step();
            }
        }
        Op::Div => {
            for i in 0..n {
                let bv = bd[it.b];
                da[it.a] = da[it.a] + dout[i] / bv;
                db[it.b] = db[it.b] - dout[i] * ad[it.a] / (bv * bv);
                it.step();
            }
        }
        _ => unreachable!(),
    }
    vec![Some(da), Some(db)]
}

#[cfg(test)]
mod tests {
    use crate::{Tape, Tensor, TensorError};

    #[test]
    fn relu_clamps_negatives_and_zero() {
        let t = Tape::<f64>::new();
        let x = Tensor::from_vec(&[3], vec![-1.0, 0.0, 2.0]).unwrap();
        assert_eq!(t.relu(&x).data(), &[0.0, 0.0, 2.0]);
    }

    #[test]
    fn hadamard_with_ones_is_identity() {
        let t = Tape::<f64>::new();
        let x = Tensor::from_vec(&[4], vec![3.0, -1.0, 0.5, 9.0]).unwrap();
        let ones = Tensor::full(&[4], 1.0);
        assert_eq!(t.mul(&x, &ones).unwrap().data(), x.data());
    }

    #[test]
    fn add_passes_upstream_gradient_to_both_sides() {
        let t = Tape::<f64>::new();
        let a = Tensor::param_from_vec(&[3], vec![1.0, 2.0, 3.0]).unwrap();
        let b = Tensor::param_from_vec(&[3], vec![4.0, 5.0, 6.0]).unwrap();
        let s = t.add(&a, &b).unwrap();
        let loss = t.sum_all(&s);
        t.backward(&loss).unwrap();
        assert_eq!(a.grad_vec().unwrap(), vec![1.0; 3]);
        assert_eq!(b.grad_vec().unwrap(), vec![1.0; 3]);
    }

    #[test]
    fn broadcast_bias_add_over_channels() {
        let t = Tape::<f64>::new();
        // [B=1,C=2,H=2,W=2] + [C=2,1,1]
        let x = Tensor::param_from_vec(&[1, 2, 2, 2], vec![0.0; 8]).unwrap();
        let bias = Tensor::param_from_vec(&[2, 1, 1], vec![1.0, 2.0]).unwrap();
        let y = t.add(&x, &bias).unwrap();
        assert_eq!(y.shape(), &[1, 2, 2, 2]);
        assert_eq!(y.data(), &[1.0, 1.0, 1.0, 1.0, 2.0, 2.0, 2.0, 2.0]);
        let loss = t.sum_all(&y);
        t.backward(&loss).unwrap();
        assert_eq!(bias.grad_vec().unwrap(), vec![4.0, 4.0]);
    }

    #[test]
    fn incompatible_broadcast_is_an_error() {
        let t = Tape::<f64>::new();
        let a = Tensor::zeros(&[2, 3]);
        let b = Tensor::zeros(&[2, 4]);
        assert!(matches!(t.add(&a, &b), Err(TensorError::NotBroadcastable { .. })));
    }
}
