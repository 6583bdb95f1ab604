//! Depth decoder: upsample-and-fuse over the pyramid, emitting a bounded
//! full-size inverse depth map plus one bounded single-channel tap per level
//! for the pose head.

use diffcore::{lit, Element, ResampleMode, RngSeed, Tape, Tensor};

use crate::encoder::Conv;
use crate::params::ParamSet;
use crate::Result;

pub(crate) struct Decoder {
    convs: Vec<Conv>,
    taps: Vec<Conv>,
    final_conv: Conv,
    out_conv: Conv,
    levels: usize,
    inv_lo: f64,
    inv_hi: f64,
}

impl Decoder {
    pub fn new<E: Element>(
        ps: &mut ParamSet<E>,
        enc_channels: &[usize],
        dec_channels: &[usize],
        inv_bounds: (f64, f64),
        seed: RngSeed,
    ) -> Self {
        let l = enc_channels.len();
        let mut convs = Vec::with_capacity(l);
        let mut taps = Vec::with_capacity(l);
        for i in 0..l {
            let s = seed.derive("decoder").derive_index(i as u64);
            let cin = if i == l - 1 { enc_channels[i] } else { dec_channels[i + 1] + enc_channels[i] };
            convs.push(Conv::new(ps, &format!("decoder.l{i}.conv"), cin, dec_channels[i], 3, 1, 1, s.derive("conv"), true));
            taps.push(Conv::new(ps, &format!("decoder.l{i}.tap"), dec_channels[i], 1, 1, 1, 0, s.derive("tap"), true));
        }
        let final_conv = Conv::new(ps, "decoder.final", dec_channels[0], dec_channels[0], 3, 1, 1, seed.derive("decoder.final"), true);
        let out_conv = Conv::new(ps, "decoder.out", dec_channels[0], 1, 1, 1, 0, seed.derive("decoder.out"), true);
        Decoder { convs, taps, final_conv, out_conv, levels: l, inv_lo: inv_bounds.0, inv_hi: inv_bounds.1 }
    }

    /// Smooth squashing into `[1/d_max, 1/d_min]`.
    fn squash<E: Element>(&self, tape: &Tape<E>, x: &Tensor<E>) -> Tensor<E> {
        let s = tape.sigmoid(x);
        tape.add_scalar(&tape.scale(&s, lit(self.inv_hi - self.inv_lo)), lit(self.inv_lo))
    }

    /// Returns the full-size inverse depth `[B,1,H,W]` and the per-level
    /// bounded taps `[B,1,H_l,W_l]`, finest level first.
    pub fn forward<E: Element>(
        &self,
        tape: &Tape<E>,
        ps: &ParamSet<E>,
        fused: &[Tensor<E>],
        full_extents: (usize, usize),
    ) -> Result<(Tensor<E>, Vec<Tensor<E>>)> {
        let l = self.levels;
        let mut taps = vec![None; l];
        let coarsest = l - 1;
        let mut d = tape.relu(&self.convs[coarsest].forward(tape, ps, &fused[coarsest])?);
        taps[coarsest] = Some(self.squash(tape, &self.taps[coarsest].forward(tape, ps, &d)?));
        for i in (0..coarsest).rev() {
            let (h, w) = (fused[i].shape()[2], fused[i].shape()[3]);
            let up = tape.resample(&d, h, w, ResampleMode::Nearest)?;
            let cat = tape.concat(&[&up, &fused[i]], 1)?;
            d = tape.relu(&self.convs[i].forward(tape, ps, &cat)?);
            taps[i] = Some(self.squash(tape, &self.taps[i].forward(tape, ps, &d)?));
        }
        let (fh, fw) = full_extents;
        let up = tape.resample(&d, fh, fw, ResampleMode::Nearest)?;
        let refined = tape.relu(&self.final_conv.forward(tape, ps, &up)?);
        let inv = self.squash(tape, &self.out_conv.forward(tape, ps, &refined)?);
        Ok((inv, taps.into_iter().map(|t| t.unwrap()).collect()))
    }
}
