use crate::ops::Op;
use crate::tape::Node;
use crate::{lit, Element, Result, Tape, Tensor, TensorError};

/// Mirror index (reflect-101): -1 -> 1, H -> H-2. Degenerates to clamping
/// for extents below 2.
#[inline]
fn mirror(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let mut i = i;
    if i < 0 {
        i = -i;
    }
    if i >= n as isize {
        i = 2 * (n as isize - 1) - i;
    }
    i.clamp(0, n as isize - 1) as usize
}

impl<E: Element> Tape<E> {
    /// 3x3 mean filter over the trailing two axes with mirrored borders.
    pub fn box3_reflect(&self, x: &Tensor<E>) -> Result<Tensor<E>> {
        let shape = x.shape();
        if shape.len() < 2 {
            return Err(TensorError::BadRank { op: "box3_reflect", expected: "rank >= 2 (.., H, W)", shape: shape.to_vec() });
        }
        let h = shape[shape.len() - 2];
        let w = shape[shape.len() - 1];
        let planes: usize = shape[..shape.len() - 2].iter().product::<usize>().max(1);
        let ninth = lit::<E>(1.0 / 9.0);
        let src = x.data();
        let mut out = vec![E::zero(); x.numel()];
        for p in 0..planes {
            let sp = &src[p * h * w..(p + 1) * h * w];
            let dp = &mut out[p * h * w..(p + 1) * h * w];
            for y in 0..h {
                for xx in 0..w {
                    let mut acc = E::zero();
                    for dy in -1isize..=1 {
                        let sy = mirror(y as isize + dy, h);
                        for dx in -1isize..=1 {
                            let sx = mirror(xx as isize + dx, w);
                            acc = acc + sp[sy * w + sx];
                        }
                    }
                    dp[y * w + xx] = acc * ninth;
                }
            }
        }
        Ok(self.emit(vec![x.clone()], shape.to_vec(), out, Op::Box3Reflect))
    }
}

pub(crate) fn backward<E: Element>(node: &Node<E>, dout: &[E]) -> Vec<Option<Vec<E>>> {
    let x = &node.inputs[0];
    let shape = x.shape();
    let h = shape[shape.len() - 2];
    let w = shape[shape.len() - 1];
    let planes: usize = shape[..shape.len() - 2].iter().product::<usize>().max(1);
    let ninth = lit::<E>(1.0 / 9.0);
    let mut dx = vec![E::zero(); x.numel()];
    for p in 0..planes {
        let dp = &dout[p * h * w..(p + 1) * h * w];
        let sp = &mut dx[p * h * w..(p + 1) * h * w];
        for y in 0..h {
            for xx in 0..w {
                let d = dp[y * w + xx] * ninth;
                for dy in -1isize..=1 {
                    let sy = mirror(y as isize + dy, h);
                    for dx_ in -1isize..=1 {
                        let sx = mirror(xx as isize + dx_, w);
                        sp[sy * w + sx] = sp[sy * w + sx] + d;
                    }
                }
            }
        }
    }
    vec![Some(dx)]
}
