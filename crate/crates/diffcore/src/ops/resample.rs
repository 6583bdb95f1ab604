use crate::ops::Op;
use crate::tape::Node;
use crate::{lit, Element, Result, Tape, Tensor, TensorError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResampleMode {
    /// Bilinear interpolation, corner alignment disabled (identity when the
    /// target extents equal the source extents).
    Bilinear,
    /// Mean over equal cells; target extents must divide the source extents.
    AveragePool,
    /// Nearest source sample.
    Nearest,
}

fn plane_dims(shape: &[usize]) -> Result<(usize, usize, usize)> {
    if shape.len() < 2 {
        return Err(TensorError::BadRank { op: "resample", expected: "rank >= 2 (.., H, W)", shape: shape.to_vec() });
    }
    let h = shape[shape.len() - 2];
    let w = shape[shape.len() - 1];
    let planes: usize = shape[..shape.len() - 2].iter().product();
    Ok((planes.max(1), h, w))
}

impl<E: Element> Tape<E> {
    /// Resize the trailing two axes to `(th, tw)`.
    pub fn resample(&self, x: &Tensor<E>, th: usize, tw: usize, mode: ResampleMode) -> Result<Tensor<E>> {
        let (planes, h, w) = plane_dims(x.shape())?;
        if th == 0 || tw == 0 {
            return Err(TensorError::Invalid { op: "resample", msg: "target extents must be >= 1".into() });
        }
        if mode == ResampleMode::AveragePool && (h % th != 0 || w % tw != 0) {
            return Err(TensorError::Invalid {
                op: "resample",
                msg: format!("average-pool target {th}x{tw} must divide source {h}x{w}"),
            });
        }
        let mut out_shape = x.shape().to_vec();
        let r = out_shape.len();
        out_shape[r - 2] = th;
        out_shape[r - 1] = tw;

        let src = x.data();
        let mut out = vec![E::zero(); planes * th * tw];
        match mode {
            ResampleMode::Bilinear => {
                let taps_y = bilinear_taps::<E>(th, h);
                let taps_x = bilinear_taps::<E>(tw, w);
                for p in 0..planes {
                    let sp = &src[p * h * w..(p + 1) * h * w];
                    let dp = &mut out[p * th * tw..(p + 1) * th * tw];
                    for oy in 0..th {
                        let (y0, y1, wy) = taps_y[oy];
                        for ox in 0..tw {
                            let (x0, x1, wx) = taps_x[ox];
                            let one = E::one();
                            let v = sp[y0 * w + x0] * (one - wy) * (one - wx)
                                + sp[y0 * w + x1] * (one - wy) * wx
                                + sp[y1 * w + x0] * wy * (one - wx)
                                + sp[y1 * w + x1] * wy * wx;
                            dp[oy * tw + ox] = v;
                        }
                    }
                }
            }
            ResampleMode::AveragePool => {
                let ky = h / th;
                let kx = w / tw;
                let inv = E::one() / lit::<E>((ky * kx) as f64);
                for p in 0..planes {
                    let sp = &src[p * h * w..(p + 1) * h * w];
                    let dp = &mut out[p * th * tw..(p + 1) * th * tw];
                    for oy in 0..th {
                        for ox in 0..tw {
                            let mut acc = E::zero();
                            for iy in oy * ky..(oy + 1) * ky {
                                for ix in ox * kx..(ox + 1) * kx {
                                    acc = acc + sp[iy * w + ix];
                                }
                            }
                            dp[oy * tw + ox] = acc * inv;
                        }
                    }
                }
            }
            ResampleMode::Nearest => {
                let iy: Vec<usize> = nearest_taps(th, h);
                let ix: Vec<usize> = nearest_taps(tw, w);
                for p in 0..planes {
                    let sp = &src[p * h * w..(p + 1) * h * w];
                    let dp = &mut out[p * th * tw..(p + 1) * th * tw];
                    for oy in 0..th {
                        for ox in 0..tw {
                            dp[oy * tw + ox] = sp[iy[oy] * w + ix[ox]];
                        }
                    }
                }
            }
        }
        Ok(self.emit(vec![x.clone()], out_shape, out, Op::Resample { mode }))
    }
}

/// (low tap, high tap, high-tap weight) per output index.
fn bilinear_taps<E: Element>(target: usize, source: usize) -> Vec<(usize, usize, E)> {
    let scale = source as f64 / target as f64;
    (0..target)
        .map(|i| {
            let c: f64 = (i as f64 + 0.5) * scale - 0.5;
            let c = c.max(0.0);
            let f = c.floor();
            let lo = (f as usize).min(source - 1);
            let hi = (lo + 1).min(source - 1);
            let w = if hi == lo { 0.0 } else { c - f };
            (lo, hi, lit::<E>(w))
        })
        .collect()
}

fn nearest_taps(target: usize, source: usize) -> Vec<usize> {
    let scale = source as f64 / target as f64;
    (0..target)
        .map(|i| {
            let c = ((i as f64 + 0.5) * scale - 0.5).round();
            (c.max(0.0) as usize).min(source - 1)
        })
        .collect()
}

pub(crate) fn backward<E: Element>(node: &Node<E>, dout: &[E], mode: ResampleMode) -> Vec<Option<Vec<E>>> {
    let x = &node.inputs[0];
    let (planes, h, w) = plane_dims(x.shape()).unwrap();
    let os = node.output.shape();
    let th = os[os.len() - 2];
    let tw = os[os.len() - 1];
    let mut dx = vec![E::zero(); x.numel()];
    match mode {
        ResampleMode::Bilinear => {
            let taps_y = bilinear_taps::<E>(th, h);
            let taps_x = bilinear_taps::<E>(tw, w);
            for p in 0..planes {
                let dp = &dout[p * th * tw..(p + 1) * th * tw];
                let sp = &mut dx[p * h * w..(p + 1) * h * w];
                for oy in 0..th {
                    let (y0, y1, wy) = taps_y[oy];
                    for ox in 0..tw {
                        let (x0, x1, wx) = taps_x[ox];
                        let d = dp[oy * tw + ox];
                        let one = E::one();
                        sp[y0 * w + x0] = sp[y0 * w + x0] + d * (one - wy) * (one - wx);
                        sp[y0 * w + x1] = sp[y0 * w + x1] + d * (one - wy) * wx;
                        sp[y1 * w + x0] = sp[y1 * w + x0] + d * wy * (one - wx);
                        sp[y1 * w + x1] = sp[y1 * w + x1] + d * wy * wx;
                    }
                }
            }
        }
        ResampleMode::AveragePool => {
            let ky = h / th;
            let kx = w / tw;
            let inv = E::one() / lit::<E>((ky * kx) as f64);
            for p in 0..planes {
                let dp = &dout[p * th * tw..(p + 1) * th * tw];
                let sp = &mut dx[p * h * w..(p + 1) * h * w];
                for oy in 0..th {
                    for ox in 0..tw {
                        let d = dp[oy * tw + ox] * inv;
                        for iy in oy * ky..(oy + 1) * ky {
                            for ix in ox * kx..(ox + 1) * kx {
                                sp[iy * w + ix] = sp[iy * w + ix] + d;
                            }
                        }
                    }
                }
            }
        }
        ResampleMode::Nearest => {
            let iy = nearest_taps(th, h);
            let ix = nearest_taps(tw, w);
            for p in 0..planes {
                let dp = &dout[p * th * tw..(p + 1) * th * tw];
                let sp = &mut dx[p * h * w..(p + 1) * h * w];
                for oy in 0..th {
                    for ox in 0..tw {
                        let k = iy[oy] * w + ix[ox];
                        sp[k] = sp[k] + dp[oy * tw + ox];
                    }
                }
            }
        }
    }
    vec![Some(dx)]
}

#[cfg(test)]
mod tests {
    use super::ResampleMode;
    use crate::{Tape, Tensor};

    #[test]
    fn bilinear_same_size_is_identity() {
        let t = Tape::<f64>::new();
        let mut rng = crate::RngSeed(23).rng();
        let x = crate::init::normal::<f64>(&[2, 4, 5], &mut rng);
        let y = t.resample(&x, 4, 5, ResampleMode::Bilinear).unwrap();
        assert_eq!(y.data(), x.data());
    }

    #[test]
    fn constant_image_stays_constant_at_any_size() {
        let t = Tape::<f64>::new();
        let x = Tensor::full(&[1, 4, 6], 7.5);
        for (th, tw) in [(2, 3), (8, 12), (5, 7), (1, 1)] {
            for mode in [ResampleMode::Bilinear, ResampleMode::Nearest] {
                let y = t.resample(&x, th, tw, mode).unwrap();
                assert!(y.data().iter().all(|&v| (v - 7.5).abs() < 1e-12), "{mode:?} {th}x{tw}");
            }
        }
        let y = t.resample(&x, 2, 3, ResampleMode::AveragePool).unwrap();
        assert!(y.data().iter().all(|&v| (v - 7.5).abs() < 1e-12));
    }

    #[test]
    fn average_pool_takes_cell_means() {
        let t = Tape::<f64>::new();
        let x = Tensor::from_vec(&[1, 2, 2], vec![0.0, 0.0, 4.0, 4.0]).unwrap();
        let y = t.resample(&x, 1, 1, ResampleMode::AveragePool).unwrap();
        assert_eq!(y.data(), &[2.0]);
    }

    #[test]
    fn average_pool_requires_divisible_extents() {
        let t = Tape::<f64>::new();
        let x = Tensor::zeros(&[1, 4, 6]);
        assert!(t.resample(&x, 3, 2, ResampleMode::AveragePool).is_err());
    }
}
