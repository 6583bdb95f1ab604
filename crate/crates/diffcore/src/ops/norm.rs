use crate::ops::Op;
use crate::tape::Node;
use crate::{lit, Element, Result, Tape, Tensor, TensorError};

impl<E: Element> Tape<E> {
    /// Layer normalization over the last axis followed by elementwise
    /// `gain`/`bias` (both of the last-axis extent).
    pub fn layer_norm(&self, x: &Tensor<E>, gain: &Tensor<E>, bias: &Tensor<E>, eps: E) -> Result<Tensor<E>> {
        let shape = x.shape();
        let d = *shape.last().ok_or(TensorError::BadRank {
            op: "layer_norm",
            expected: "rank >= 1",
            shape: shape.to_vec(),
        })?;
        if gain.shape() != [d] || bias.shape() != [d] {
            return Err(TensorError::ShapeMismatch { op: "layer_norm", lhs: gain.shape().to_vec(), rhs: vec![d] });
        }
        if eps <= E::zero() {
            return Err(TensorError::Invalid { op: "layer_norm", msg: "eps must be positive".into() });
        }
        let rows = x.numel() / d;
        let src = x.data();
        let g = gain.data();
        let b = bias.data();
        let inv_d = E::one() / lit::<E>(d as f64);
        let mut out = vec![E::zero(); x.numel()];
        for r in 0..rows {
            let row = &src[r * d..(r + 1) * d];
            let mut mean = E::zero();
            for &v in row {
                mean = mean + v;
            }
            mean = mean * inv_d;
            let mut var = E::zero();
            for &v in row {
                let c = v - mean;
                var = var + c * c;
            }
            var = var * inv_d;
            let inv_std = E::one() / (var + eps).sqrt();
            let dst = &mut out[r * d..(r + 1) * d];
            for j in 0..d {
                dst[j] = (row[j] - mean) * inv_std * g[j] + b[j];
            }
        }
        Ok(self.emit(vec![x.clone(), gain.clone(), bias.clone()], shape.to_vec(), out, Op::LayerNorm { eps }))
    }
}

pub(crate) fn backward<E: Element>(node: &Node<E>, dout: &[E], eps: E) -> Vec<Option<Vec<E>>> {
    let x = node.inputs[0].data();
    let g = node.inputs[1].data();
    let d = *node.inputs[0].shape().last().unwrap();
    let rows = x.len() / d;
    let inv_d = E::one() / lit::<E>(d as f64);

    let mut dx = vec![E::zero(); x.len()];
    let mut dgain = vec![E::zero(); d];
    let mut dbias = vec![E::zero(); d];

    for r in 0..rows {
        let row = &x[r * d..(r + 1) * d];
        let dr = &dout[r * d..(r + 1) * d];
        let mut mean = E::zero();
        for &v in row {
            mean = mean + v;
        }
        mean = mean * inv_d;
        let mut var = E::zero();
        for &v in row {
            let c = v - mean;
            var = var + c * c;
        }
        var = var * inv_d;
        let inv_std = E::one() / (var + eps).sqrt();

        // dxhat = dout * gain; dx = inv_std * (dxhat - mean(dxhat) - xhat * mean(dxhat * xhat))
        let mut m1 = E::zero();
        let mut m2 = E::zero();
        for j in 0..d {
            let xhat = (row[j] - mean) * inv_std;
            let dxhat = dr[j] * g[j];
            m1 = m1 + dxhat;
            m2 = m2 + dxhat * xhat;
            dgain[j] = dgain[j] + dr[j] * xhat;
            dbias[j] = dbias[j] + dr[j];
        }
        m1 = m1 * inv_d;
        m2 = m2 * inv_d;
        let dst = &mut dx[r * d..(r + 1) * d];
        for j in 0..d {
            let xhat = (row[j] - mean) * inv_std;
            let dxhat = dr[j] * g[j];
            dst[j] = inv_std * (dxhat - m1 - xhat * m2);
        }
    }
    vec![Some(dx), Some(dgain), Some(dbias)]
}

#[cfg(test)]
mod tests {
    use crate::{Tape, Tensor};

    #[test]
    fn constant_row_maps_to_zero() {
        let t = Tape::<f64>::new();
        let x = Tensor::from_vec(&[3], vec![5.0, 5.0, 5.0]).unwrap();
        let gain = Tensor::from_vec(&[3], vec![1.0; 3]).unwrap();
        let bias = Tensor::zeros(&[3]);
        let y = t.layer_norm(&x, &gain, &bias, 1e-5).unwrap();
        for &v in y.data() {
            assert!(v.abs() < 1e-9, "zero-variance row should normalize to zero, got {v}");
        }
    }

    #[test]
    fn normalizes_random_rows() {
        let t = Tape::<f64>::new();
        let mut rng = crate::RngSeed(3).rng();
        let x = crate::init::normal::<f64>(&[6, 16], &mut rng);
        let gain = Tensor::from_vec(&[16], vec![1.0; 16]).unwrap();
        let bias = Tensor::zeros(&[16]);
        let y = t.layer_norm(&x, &gain, &bias, 1e-6).unwrap();
        for r in 0..6 {
            let row = &y.data()[r * 16..(r + 1) * 16];
            let mean: f64 = row.iter().sum::<f64>() / 16.0;
            let var: f64 = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / 16.0;
            assert!(mean.abs() <= 1e-6, "row mean {mean}");
            assert!((var - 1.0).abs() <= 1e-3, "row var {var}");
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        use crate::gradcheck::{finite_diff_check_multi, DEFAULT_STEP};
        let mut rng = crate::RngSeed(5).rng();
        let x = crate::init::normal::<f64>(&[3, 4], &mut rng);
        let gain = crate::init::normal::<f64>(&[4], &mut rng);
        let bias = crate::init::normal::<f64>(&[4], &mut rng);
        let err = finite_diff_check_multi(
            |t, xs| {
                let y = t.layer_norm(&xs[0], &xs[1], &xs[2], 1e-5)?;
                Ok(t.sum_all(&t.mul(&y, &y)?))
            },
            &[x, gain, bias],
            DEFAULT_STEP,
        )
        .unwrap();
        assert!(err <= 1e-5, "layer_norm fd error {err}");
    }
}
