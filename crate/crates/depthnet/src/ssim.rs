//! Windowed structural similarity with 3x3 mean filtering and mirrored
//! borders; constants C1 = 0.01^2, C2 = 0.03^2 for images in [0, 1].

use diffcore::{lit, Element, Tape, Tensor};

use crate::Result;

pub const C1: f64 = 0.01 * 0.01;
pub const C2: f64 = 0.03 * 0.03;

/// Per-pixel SSIM map in [-1, 1] over the trailing two axes, per channel.
pub fn ssim_map<E: Element>(tape: &Tape<E>, a: &Tensor<E>, b: &Tensor<E>) -> Result<Tensor<E>> {
    if a.shape() != b.shape() {
        return Err(diffcore::TensorError::ShapeMismatch {
            op: "ssim",
            lhs: a.shape().to_vec(),
            rhs: b.shape().to_vec(),
        }
        .into());
    }
    let mu_a = tape.box3_reflect(a)?;
    let mu_b = tape.box3_reflect(b)?;
    let mu_aa = tape.mul(&mu_a, &mu_a)?;
    let mu_bb = tape.mul(&mu_b, &mu_b)?;
    let mu_ab = tape.mul(&mu_a, &mu_b)?;
    let var_a = tape.sub(&tape.box3_reflect(&tape.mul(a, a)?)?, &mu_aa)?;
    let var_b = tape.sub(&tape.box3_reflect(&tape.mul(b, b)?)?, &mu_bb)?;
    let cov = tape.sub(&tape.box3_reflect(&tape.mul(a, b)?)?, &mu_ab)?;

    let c1 = lit::<E>(C1);
    let c2 = lit::<E>(C2);
    let num = tape.mul(
        &tape.add_scalar(&tape.scale(&mu_ab, lit(2.0)), c1),
        &tape.add_scalar(&tape.scale(&cov, lit(2.0)), c2),
    )?;
    let den = tape.mul(
        &tape.add_scalar(&tape.add(&mu_aa, &mu_bb)?, c1),
        &tape.add_scalar(&tape.add(&var_a, &var_b)?, c2),
    )?;
    Ok(tape.div(&num, &den)?)
}

/// Loss form `(1 - ssim) / 2`, still per pixel.
pub fn ssim_loss_map<E: Element>(tape: &Tape<E>, a: &Tensor<E>, b: &Tensor<E>) -> Result<Tensor<E>> {
    let s = ssim_map(tape, a, b)?;
    Ok(tape.scale(&tape.add_scalar(&tape.neg(&s), E::one()), lit(0.5)))
}
