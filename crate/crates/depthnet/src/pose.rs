//! Depth-guided pose head: per-level Hadamard fusion of attention features
//! with the decoder taps, compression onto the coarsest grid, a small
//! convolutional trunk with global mean pooling, and a linear head scaled
//! by 0.01 so the initial motion stays near the identity.

use diffcore::{init, lit, Element, ResampleMode, RngSeed, Tape, Tensor};

use crate::config::ModuleToggles;
use crate::encoder::Conv;
use crate::params::{ParamRef, ParamSet};
use crate::Result;

const HEAD_SCALE: f64 = 0.01;
const TRUNK_WIDTH: usize = 64;

pub(crate) struct PoseNet {
    compress: Vec<Conv>,
    trunk0: Conv,
    trunk1: Conv,
    head_w: ParamRef,
    head_b: ParamRef,
    frames: usize,
    cameras: usize,
}

impl PoseNet {
    pub fn new<E: Element>(
        ps: &mut ParamSet<E>,
        enc_channels: &[usize],
        pose_channels: usize,
        frames: usize,
        cameras: usize,
        seed: RngSeed,
    ) -> Self {
        let l = enc_channels.len();
        let compress = enc_channels
            .iter()
            .enumerate()
            .map(|(i, &c)| {
                Conv::new(
                    ps,
                    &format!("pose.l{i}.compress"),
                    c,
                    pose_channels,
                    1,
                    1,
                    0,
                    seed.derive("pose.compress").derive_index(i as u64),
                    true,
                )
            })
            .collect();
        let trunk0 = Conv::new(ps, "pose.trunk0", l * pose_channels, TRUNK_WIDTH, 3, 1, 1, seed.derive("pose.trunk0"), true);
        let trunk1 = Conv::new(ps, "pose.trunk1", TRUNK_WIDTH, TRUNK_WIDTH, 3, 1, 1, seed.derive("pose.trunk1"), true);
        let mut rng = seed.derive("pose.head").rng();
        let head_w = ps.register("pose.head.weight", init::uniform_fan_in(&[frames * TRUNK_WIDTH, 6], frames * TRUNK_WIDTH, &mut rng));
        let head_b = ps.register("pose.head.bias", Tensor::param_from_vec(&[6], vec![E::zero(); 6]).expect("bias"));
        PoseNet { compress, trunk0, trunk1, head_w, head_b, frames, cameras }
    }

    /// Per-level fusion of features with the decoder tap (broadcast over
    /// channels), compressed onto the coarsest grid.
    pub fn fuse_level<E: Element>(
        &self,
        tape: &Tape<E>,
        ps: &ParamSet<E>,
        level: usize,
        features: &Tensor<E>,
        depth_tap: &Tensor<E>,
        coarse: (usize, usize),
        depth_enhanced: bool,
    ) -> Result<Tensor<E>> {
        let guided = if depth_enhanced { tape.mul(features, depth_tap)? } else { features.clone() };
        let compact = tape.relu(&self.compress[level].forward(tape, ps, &guided)?);
        let (h, w) = (compact.shape()[2], compact.shape()[3]);
        if (h, w) == coarse {
            Ok(compact)
        } else {
            Ok(tape.resample(&compact, coarse.0, coarse.1, ResampleMode::AveragePool)?)
        }
    }

    /// Six-vector motion estimate (axis-angle + translation) for the
    /// source-to-target frame pair.
    pub fn forward<E: Element>(
        &self,
        tape: &Tape<E>,
        ps: &ParamSet<E>,
        fused: &[Tensor<E>],
        depth_taps: &[Tensor<E>],
        toggles: &ModuleToggles,
    ) -> Result<Tensor<E>> {
        let coarsest = fused.last().expect("at least one level");
        let coarse = (coarsest.shape()[2], coarsest.shape()[3]);
        let mut per_level = Vec::with_capacity(fused.len());
        for l in 0..fused.len() {
            per_level.push(self.fuse_level(tape, ps, l, &fused[l], &depth_taps[l], coarse, toggles.depth_enhanced_pose)?);
        }
        let refs: Vec<&Tensor<E>> = per_level.iter().collect();
        let stack = tape.concat(&refs, 1)?;
        let t = tape.relu(&self.trunk0.forward(tape, ps, &stack)?);
        let t = tape.relu(&self.trunk1.forward(tape, ps, &t)?);
        // Global spatial mean, then camera mean per frame.
        let b = self.frames * self.cameras;
        let flat = tape.reshape(&t, &[b, TRUNK_WIDTH, coarse.0 * coarse.1])?;
        let pooled = tape.mean_axis(&flat, 2)?;
        let grouped = tape.reshape(&pooled, &[self.frames, self.cameras, TRUNK_WIDTH])?;
        let per_frame = tape.mean_axis(&grouped, 1)?;
        let joint = tape.reshape(&per_frame, &[1, self.frames * TRUNK_WIDTH])?;
        let out = tape.add(&tape.matmul(&joint, ps.get(self.head_w))?, ps.get(self.head_b))?;
        let scaled = tape.scale(&out, lit(HEAD_SCALE));
        Ok(tape.reshape(&scaled, &[6])?)
    }
}
