use crate::ops::Op;
use crate::tape::Node;
use crate::{Element, Result, Tape, Tensor, TensorError};

impl<E: Element> Tape<E> {
    /// Bilinear lookup of `image` `[C,H,W]` at `coords` `[Ho,Wo,2]` given in
    /// pixel units (`x` then `y`, integer coordinates at pixel centers).
    ///
    /// Out-of-bounds positions clamp to the border; the companion mask is
    /// true where the position lies inside the pixel-center hull. The result
    /// is differentiable w.r.t. both the image and the coordinates.
    pub fn grid_sample(&self, image: &Tensor<E>, coords: &Tensor<E>) -> Result<(Tensor<E>, Vec<bool>)> {
        let ish = image.shape();
        let csh = coords.shape();
        if ish.len() != 3 {
            return Err(TensorError::BadRank { op: "grid_sample", expected: "image of rank 3 (C,H,W)", shape: ish.to_vec() });
        }
        if csh.len() != 3 || csh[2] != 2 {
            return Err(TensorError::BadRank { op: "grid_sample", expected: "coords of rank 3 (H,W,2)", shape: csh.to_vec() });
        }
        let (c, h, w) = (ish[0], ish[1], ish[2]);
        let (oh, ow) = (csh[0], csh[1]);
        let img = image.data();
        let crd = coords.data();
        let mut out = vec![E::zero(); c * oh * ow];
        let mut valid = vec![false; oh * ow];
        let max_x = E::from_usize(w - 1).unwrap();
        let max_y = E::from_usize(h - 1).unwrap();
        for i in 0..oh * ow {
            let x = crd[i * 2];
            let y = crd[i * 2 + 1];
            valid[i] = x >= E::zero() && x <= max_x && y >= E::zero() && y <= max_y && x.is_finite() && y.is_finite();
            let cx = clamp01(x, max_x);
            let cy = clamp01(y, max_y);
            let x0 = cx.floor().to_usize().unwrap().min(w - 1);
            let y0 = cy.floor().to_usize().unwrap().min(h - 1);
            let x1 = (x0 + 1).min(w - 1);
            let y1 = (y0 + 1).min(h - 1);
            let fx = cx - E::from_usize(x0).unwrap();
            let fy = cy - E::from_usize(y0).unwrap();
            let one = E::one();
            for ch in 0..c {
                let plane = &img[ch * h * w..(ch + 1) * h * w];
                let v = plane[y0 * w + x0] * (one - fy) * (one - fx)
                    + plane[y0 * w + x1] * (one - fy) * fx
                    + plane[y1 * w + x0] * fy * (one - fx)
                    + plane[y1 * w + x1] * fy * fx;
                out[ch * oh * ow + i] = v;
            }
        }
        let t = self.emit(vec![image.clone(), coords.clone()], vec![c, oh, ow], out, Op::GridSample);
        Ok((t, valid))
    }
}

#[inline]
fn clamp01<E: Element>(v: E, hi: E) -> E {
    if v.is_nan() {
        return E::zero();
    }
    if v < E::zero() {
        E::zero()
    } else if v > hi {
        hi
    } else {
        v
    }
}

pub(crate) fn backward<E: Element>(node: &Node<E>, dout: &[E]) -> Vec<Option<Vec<E>>> {
    let image = &node.inputs[0];
    let coords = &node.inputs[1];
    let (c, h, w) = (image.shape()[0], image.shape()[1], image.shape()[2]);
    let (oh, ow) = (coords.shape()[0], coords.shape()[1]);
    let img = image.data();
    let crd = coords.data();
    let mut dimg = vec![E::zero(); image.numel()];
    let mut dcrd = vec![E::zero(); coords.numel()];
    let max_x = E::from_usize(w - 1).unwrap();
    let max_y = E::from_usize(h - 1).unwrap();
    let one = E::one();
    for i in 0..oh * ow {
        let x = crd[i * 2];
        let y = crd[i * 2 + 1];
        // Saturated clamp: no motion past the border, so zero coord-gradient there.
        let inside_x = x >= E::zero() && x <= max_x;
        let inside_y = y >= E::zero() && y <= max_y;
        let cx = clamp01(x, max_x);
        let cy = clamp01(y, max_y);
        let x0 = cx.floor().to_usize().unwrap().min(w - 1);
        let y0 = cy.floor().to_usize().unwrap().min(h - 1);
        let x1 = (x0 + 1).min(w - 1);
        let y1 = (y0 + 1).min(h - 1);
        let fx = cx - E::from_usize(x0).unwrap();
        let fy = cy - E::from_usize(y0).unwrap();
        let mut gx = E::zero();
        let mut gy = E::zero();
        for ch in 0..c {
            let d = dout[ch * oh * ow + i];
            if d == E::zero() {
                continue;
            }
            let plane = &img[ch * h * w..(ch + 1) * h * w];
            let p00 = plane[y0 * w + x0];
            let p01 = plane[y0 * w + x1];
            let p10 = plane[y1 * w + x0];
            let p11 = plane[y1 * w + x1];
            let dp = &mut dimg[ch * h * w..(ch + 1) * h * w];
            dp[y0 * w + x0] = dp[y0 * w + x0] + d * (one - fy) * (one - fx);
            dp[y0 * w + x1] = dp[y0 * w + x1] + d * (one - fy) * fx;
            dp[y1 * w + x0] = dp[y1 * w + x0] + d * fy * (one - fx);
            dp[y1 * w + x1] = dp[y1 * w + x1] + d * fy * fx;
            gx = gx + d * ((one - fy) * (p01 - p00) + fy * (p11 - p10));
            gy = gy + d * ((one - fx) * (p10 - p00) + fx * (p11 - p01));
        }
        if inside_x {
            dcrd[i * 2] = gx;
        }
        if inside_y {
            dcrd[i * 2 + 1] = gy;
        }
    }
    vec![Some(dimg), Some(dcrd)]
}
