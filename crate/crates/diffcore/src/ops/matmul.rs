use crate::ops::Op;
use crate::tape::Node;
use crate::{Element, Result, Tape, Tensor, TensorError};

/// c[m,n] += a[m,k] * b[k,n]
pub(crate) fn gemm<E: Element>(a: &[E], b: &[E], c: &mut [E], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let crow = &mut c[i * n..(i + 1) * n];
        for p in 0..k {
            let aip = a[i * k + p];
            if aip == E::zero() {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for j in 0..n {
                crow[j] = crow[j] + aip * brow[j];
            }
        }
    }
}

/// c[m,n] += a[m,k] * b[n,k]^T
pub(crate) fn gemm_nt<E: Element>(a: &[E], b: &[E], c: &mut [E], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let crow = &mut c[i * n..(i + 1) * n];
        for j in 0..n {
            let brow = &b[j * k..(j + 1) * k];
            let mut acc = E::zero();
            for p in 0..k {
                acc = acc + arow[p] * brow[p];
            }
            crow[j] = crow[j] + acc;
        }
    }
}

/// c[k,n] += a[m,k]^T * b[m,n]
pub(crate) fn gemm_tn<E: Element>(a: &[E], b: &[E], c: &mut [E], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let brow = &b[i * n..(i + 1) * n];
        for p in 0..k {
            let aip = a[i * k + p];
            if aip == E::zero() {
                continue;
            }
            let crow = &mut c[p * n..(p + 1) * n];
            for j in 0..n {
                crow[j] = crow[j] + aip * brow[j];
            }
        }
    }
}

impl<E: Element> Tape<E> {
    /// Standard matrix product of two rank-2 tensors.
    pub fn matmul(&self, a: &Tensor<E>, b: &Tensor<E>) -> Result<Tensor<E>> {
        let (ash, bsh) = (a.shape(), b.shape());
        if ash.len() != 2 || bsh.len() != 2 || ash[1] != bsh[0] {
            return Err(TensorError::ShapeMismatch { op: "matmul", lhs: ash.to_vec(), rhs: bsh.to_vec() });
        }
        let (m, k, n) = (ash[0], ash[1], bsh[1]);
        let mut out = vec![E::zero(); m * n];
        gemm(a.data(), b.data(), &mut out, m, k, n);
        Ok(self.emit(vec![a.clone(), b.clone()], vec![m, n], out, Op::Matmul))
    }
}

pub(crate) fn backward<E: Element>(node: &Node<E>, dout: &[E]) -> Vec<Option<Vec<E>>> {
    let a = &node.inputs[0];
    let b = &node.inputs[1];
    let (m, k) = (a.shape()[0], a.shape()[1]);
    let n = b.shape()[1];
    // dA = dC * B^T, dB = A^T * dC
    let mut da = vec![E::zero(); m * k];
    gemm_nt(dout, b.data(), &mut da, m, n, k);
    let mut db = vec![E::zero(); k * n];
    gemm_tn(a.data(), dout, &mut db, m, k, n);
    vec![Some(da), Some(db)]
}

#[cfg(test)]
mod tests {
    use crate::{Tape, Tensor, TensorError};

    #[test]
    fn identity_passthrough() {
        let t = Tape::<f64>::new();
        let a = Tensor::from_vec(&[2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let id = Tensor::from_vec(&[2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let c = t.matmul(&a, &id).unwrap();
        assert_eq!(c.data(), a.data());
    }

    #[test]
    fn annihilating_product() {
        let t = Tape::<f64>::new();
        let a = Tensor::from_vec(&[2, 2], vec![1.0, 0.0, 0.0, 0.0]).unwrap();
        let b = Tensor::from_vec(&[2, 2], vec![0.0, 0.0, 0.0, 1.0]).unwrap();
        let c = t.matmul(&a, &b).unwrap();
        assert_eq!(c.data(), &[0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn shape_mismatch_names_both_shapes() {
        let t = Tape::<f64>::new();
        let a = Tensor::zeros(&[2, 3]);
        let b = Tensor::zeros(&[2, 3]);
        match t.matmul(&a, &b) {
            Err(TensorError::ShapeMismatch { lhs, rhs, .. }) => {
                assert_eq!(lhs, vec![2, 3]);
                assert_eq!(rhs, vec![2, 3]);
            }
            other => panic!("expected shape mismatch, got {other:?}"),
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        use crate::gradcheck::{finite_diff_check_multi, DEFAULT_STEP};
        use crate::init::normal;
        let mut rng = crate::RngSeed(7).rng();
        let a = normal::<f64>(&[3, 4], &mut rng);
        let b = normal::<f64>(&[4, 2], &mut rng);
        let err = finite_diff_check_multi(
            |t, xs| {
                let c = t.matmul(&xs[0], &xs[1])?;
                Ok(t.sum_all(&c))
            },
            &[a, b],
            DEFAULT_STEP,
        )
        .unwrap();
        assert!(err <= 1e-6, "matmul fd error {err}");
    }
}
