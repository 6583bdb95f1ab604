use crate::ops::Op;
use crate::tape::Node;
use crate::{Element, Result, Tape, Tensor, TensorError};

/// Visit every 1-D lane along `axis` of `shape` as (base offset, stride).
fn for_each_lane(shape: &[usize], axis: usize, mut f: impl FnMut(usize, usize)) {
    let stride: usize = shape[axis + 1..].iter().product();
    let outer: usize = shape[..axis].iter().product();
    let inner = stride;
    let axis_len = shape[axis];
    for o in 0..outer {
        for i in 0..inner {
            f(o * axis_len * inner + i, stride);
        }
    }
}

impl<E: Element> Tape<E> {
    /// Max-stabilized softmax along `axis`; lanes sum to one.
    pub fn softmax(&self, a: &Tensor<E>, axis: usize) -> Result<Tensor<E>> {
        let shape = a.shape();
        if axis >= shape.len() {
            return Err(TensorError::BadAxis { axis, shape: shape.to_vec() });
        }
        if a.data().iter().any(|v| v.is_nan()) {
            return Err(TensorError::NonFiniteInput { op: "softmax" });
        }
        let src = a.data();
        let mut out = src.to_vec();
        let axis_len = shape[axis];
        for_each_lane(shape, axis, |base, stride| {
            let mut m = E::neg_infinity();
            for i in 0..axis_len {
                let v = src[base + i * stride];
                if v > m {
                    m = v;
                }
            }
            let mut sum = E::zero();
            for i in 0..axis_len {
                let e = (src[base + i * stride] - m).exp();
                out[base + i * stride] = e;
                sum = sum + e;
            }
            for i in 0..axis_len {
                out[base + i * stride] = out[base + i * stride] / sum;
            }
        });
        Ok(self.emit(vec![a.clone()], shape.to_vec(), out, Op::Softmax { axis }))
    }
}

pub(crate) fn backward<E: Element>(node: &Node<E>, dout: &[E], axis: usize) -> Vec<Option<Vec<E>>> {
    let y = node.output.data();
    let shape = node.output.shape();
    let axis_len = shape[axis];
    let mut dx = vec![E::zero(); y.len()];
    for_each_lane(shape, axis, |base, stride| {
        let mut dot = E::zero();
        for i in 0..axis_len {
            let k = base + i * stride;
            dot = dot + dout[k] * y[k];
        }
        for i in 0..axis_len {
            let k = base + i * stride;
            dx[k] = y[k] * (dout[k] - dot);
        }
    });
    vec![Some(dx)]
}

#[cfg(test)]
mod tests {
    use crate::{Tape, Tensor, TensorError};

    #[test]
    fn uniform_on_equal_logits() {
        let t = Tape::<f64>::new();
        let x = Tensor::from_vec(&[3], vec![0.0, 0.0, 0.0]).unwrap();
        let y = t.softmax(&x, 0).unwrap();
        for &v in y.data() {
            assert!((v - 1.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn stabilized_against_overflow() {
        let t = Tape::<f32>::new();
        let x = Tensor::from_vec(&[2], vec![1000.0, 1000.0]).unwrap();
        let y = t.softmax(&x, 0).unwrap();
        assert!(y.data().iter().all(|v| (v - 0.5).abs() < 1e-6));
    }

    #[test]
    fn nan_input_is_an_error() {
        let t = Tape::<f64>::new();
        let x = Tensor::from_vec(&[2], vec![f64::NAN, 0.0]).unwrap();
        assert!(matches!(t.softmax(&x, 0), Err(TensorError::NonFiniteInput { .. })));
    }

    #[test]
    fn gradient_matches_finite_differences() {
        use crate::gradcheck::{finite_diff_check, DEFAULT_STEP};
        use crate::init::normal;
        let mut rng = crate::RngSeed(11).rng();
        let x = normal::<f64>(&[5], &mut rng);
        let err = finite_diff_check(
            |t, x| {
                let s = t.softmax(x, 0)?;
                Ok(t.sum_all(&t.mul(&s, &s)?))
            },
            &x,
            DEFAULT_STEP,
        )
        .unwrap();
        assert!(err <= 1e-6, "softmax fd error {err}");
    }

    #[test]
    fn lanes_sum_to_one_on_any_axis() {
        let t = Tape::<f64>::new();
        let mut rng = crate::RngSeed(13).rng();
        let x = crate::init::normal::<f64>(&[2, 3, 4], &mut rng);
        for axis in 0..3 {
            let y = t.softmax(&x, axis).unwrap();
            let s = t.sum_axis(&y, axis).unwrap();
            for &v in s.data() {
                assert!((v - 1.0).abs() < 1e-6);
            }
            assert!(y.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
        }
    }
}
