use crate::ops::matmul::{gemm, gemm_nt, gemm_tn};
use crate::ops::Op;
use crate::tape::Node;
use crate::{Element, Result, Tape, Tensor, TensorError};

struct ConvDims {
    b: usize,
    ci: usize,
    h: usize,
    w: usize,
    co: usize,
    kh: usize,
    kw: usize,
    ho: usize,
    wo: usize,
}

fn dims<E: Element>(x: &Tensor<E>, weight: &Tensor<E>, stride: usize, padding: usize) -> Result<ConvDims> {
    let xs = x.shape();
    let ws = weight.shape();
    if xs.len() != 4 {
        return Err(TensorError::BadRank { op: "conv2d", expected: "input of rank 4 (B,C,H,W)", shape: xs.to_vec() });
    }
    if ws.len() != 4 {
        return Err(TensorError::BadRank { op: "conv2d", expected: "kernel of rank 4 (Co,Ci,kh,kw)", shape: ws.to_vec() });
    }
    let (b, ci, h, w) = (xs[0], xs[1], xs[2], xs[3]);
    let (co, wci, kh, kw) = (ws[0], ws[1], ws[2], ws[3]);
    if wci != ci {
        return Err(TensorError::ShapeMismatch { op: "conv2d", lhs: xs.to_vec(), rhs: ws.to_vec() });
    }
    if stride == 0 || kh == 0 || kw == 0 || kh > h + 2 * padding || kw > w + 2 * padding {
        return Err(TensorError::ConvGeometry {
            op: "conv2d",
            input: xs.to_vec(),
            kernel: ws.to_vec(),
            stride,
            padding,
        });
    }
    let ho = (h + 2 * padding - kh) / stride + 1;
    let wo = (w + 2 * padding - kw) / stride + 1;
    Ok(ConvDims { b, ci, h, w, co, kh, kw, ho, wo })
}

/// cols[ci*kh*kw, ho*wo] from one image plane set.
fn im2col<E: Element>(img: &[E], d: &ConvDims, stride: usize, padding: usize, cols: &mut [E]) {
    let (h, w, ho, wo) = (d.h, d.w, d.ho, d.wo);
    let mut row = 0usize;
    for c in 0..d.ci {
        let plane = &img[c * h * w..(c + 1) * h * w];
        for ky in 0..d.kh {
            for kx in 0..d.kw {
                let dst = &mut cols[row * ho * wo..(row + 1) * ho * wo];
                for oy in 0..ho {
                    let iy = (oy * stride + ky) as isize - padding as isize;
                    let drow = &mut dst[oy * wo..(oy + 1) * wo];
                    if iy < 0 || iy >= h as isize {
                        for v in drow.iter_mut() {
                            *v = E::zero();
                        }
                        continue;
                    }
                    let srow = &plane[iy as usize * w..(iy as usize + 1) * w];
                    for ox in 0..wo {
                        let ix = (ox * stride + kx) as isize - padding as isize;
                        drow[ox] = if ix < 0 || ix >= w as isize { E::zero() } else { srow[ix as usize] };
                    }
                }
                row += 1;
            }
        }
    }
}

/// Scatter-add of cols back into an image (adjoint of im2col).
fn col2im<E: Element>(cols: &[E], d: &ConvDims, stride: usize, padding: usize, img: &mut [E]) {
    let (h, w, ho, wo) = (d.h, d.w, d.ho, d.wo);
    let mut row = 0usize;
    for c in 0..d.ci {
        let plane = &mut img[c * h * w..(c + 1) * h * w];
        for ky in 0..d.kh {
            for kx in 0..d.kw {
                let src = &cols[row * ho * wo..(row + 1) * ho * wo];
                for oy in 0..ho {
                    let iy = (oy * stride + ky) as isize - padding as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let prow = &mut plane[iy as usize * w..(iy as usize + 1) * w];
                    let srow = &src[oy * wo..(oy + 1) * wo];
                    for ox in 0..wo {
                        let ix = (ox * stride + kx) as isize - padding as isize;
                        if ix >= 0 && ix < w as isize {
                            prow[ix as usize] = prow[ix as usize] + srow[ox];
                        }
                    }
                }
                row += 1;
            }
        }
    }
}

impl<E: Element> Tape<E> {
    /// 2-D cross-correlation of `x` `[B,Ci,H,W]` with `weight`
    /// `[Co,Ci,kh,kw]`. Bias, when wanted, is a broadcast `add`.
    pub fn conv2d(&self, x: &Tensor<E>, weight: &Tensor<E>, stride: usize, padding: usize) -> Result<Tensor<E>> {
        let d = dims(x, weight, stride, padding)?;
        let ck = d.ci * d.kh * d.kw;
        let plane = d.ho * d.wo;
        let mut cols = vec![E::zero(); ck * plane];
        let mut out = vec![E::zero(); d.b * d.co * plane];
        let img_len = d.ci * d.h * d.w;
        for bi in 0..d.b {
            im2col(&x.data()[bi * img_len..(bi + 1) * img_len], &d, stride, padding, &mut cols);
            gemm(weight.data(), &cols, &mut out[bi * d.co * plane..(bi + 1) * d.co * plane], d.co, ck, plane);
        }
        Ok(self.emit(
            vec![x.clone(), weight.clone()],
            vec![d.b, d.co, d.ho, d.wo],
            out,
            Op::Conv2d { stride, padding },
        ))
    }
}

pub(crate) fn backward<E: Element>(node: &Node<E>, dout: &[E], stride: usize, padding: usize) -> Vec<Option<Vec<E>>> {
    let x = &node.inputs[0];
    let weight = &node.inputs[1];
    let d = dims(x, weight, stride, padding).expect("forward validated");
    let ck = d.ci * d.kh * d.kw;
    let plane = d.ho * d.wo;
    let img_len = d.ci * d.h * d.w;

    let mut cols = vec![E::zero(); ck * plane];
    let mut dcols = vec![E::zero(); ck * plane];
    let mut dx = vec![E::zero(); x.numel()];
    let mut dw = vec![E::zero(); weight.numel()];

    for bi in 0..d.b {
        let dy = &dout[bi * d.co * plane..(bi + 1) * d.co * plane];
        // dW += dY * cols^T
        im2col(&x.data()[bi * img_len..(bi + 1) * img_len], &d, stride, padding, &mut cols);
        gemm_nt(dy, &cols, &mut dw, d.co, plane, ck);
        // dcols = W^T * dY, then scatter back to the image
        for v in dcols.iter_mut() {
            *v = E::zero();
        }
        gemm_tn(weight.data(), dy, &mut dcols, d.co, ck, plane);
        col2im(&dcols, &d, stride, padding, &mut dx[bi * img_len..(bi + 1) * img_len]);
    }
    vec![Some(dx), Some(dw)]
}

#[cfg(test)]
mod tests {
    use crate::{Tape, Tensor, TensorError};

    #[test]
    fn one_by_one_unit_kernel_is_identity() {
        let t = Tape::<f64>::new();
        let x = Tensor::from_vec(&[1, 1, 2, 3], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let w = Tensor::from_vec(&[1, 1, 1, 1], vec![1.0]).unwrap();
        let y = t.conv2d(&x, &w, 1, 0).unwrap();
        assert_eq!(y.shape(), x.shape());
        assert_eq!(y.data(), x.data());
    }

    #[test]
    fn averaging_kernel_preserves_constant_interior() {
        let t = Tape::<f64>::new();
        let x = Tensor::full(&[1, 1, 5, 5], 3.0);
        let w = Tensor::full(&[1, 1, 3, 3], 1.0 / 9.0);
        let y = t.conv2d(&x, &w, 1, 0).unwrap();
        assert_eq!(y.shape(), &[1, 1, 3, 3]);
        for &v in y.data() {
            assert!((v - 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn output_extent_formula() {
        let t = Tape::<f64>::new();
        let x = Tensor::zeros(&[2, 3, 9, 11]);
        let w = Tensor::zeros(&[4, 3, 3, 3]);
        let y = t.conv2d(&x, &w, 2, 1).unwrap();
        // H' = floor((9 + 2 - 3)/2) + 1 = 5, W' = floor((11 + 2 - 3)/2) + 1 = 6
        assert_eq!(y.shape(), &[2, 4, 5, 6]);
    }

    #[test]
    fn oversized_kernel_is_a_geometry_error() {
        let t = Tape::<f64>::new();
        let x = Tensor::zeros(&[1, 1, 2, 2]);
        let w = Tensor::zeros(&[1, 1, 5, 5]);
        assert!(matches!(t.conv2d(&x, &w, 1, 0), Err(TensorError::ConvGeometry { .. })));
    }

    #[test]
    fn gradients_match_finite_differences() {
        use crate::gradcheck::{finite_diff_check_multi, DEFAULT_STEP};
        use crate::init::normal;
        let mut rng = crate::RngSeed(17).rng();
        let x = normal::<f64>(&[2, 2, 5, 6], &mut rng);
        let w = normal::<f64>(&[3, 2, 3, 3], &mut rng);
        let err = finite_diff_check_multi(
            |t, xs| {
                let y = t.conv2d(&xs[0], &xs[1], 2, 1)?;
                Ok(t.sum_all(&t.mul(&y, &y)?))
            },
            &[x, w],
            DEFAULT_STEP,
        )
        .unwrap();
        assert!(err <= 1e-5, "conv2d fd error {err}");
    }
}
