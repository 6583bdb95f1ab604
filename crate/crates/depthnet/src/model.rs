use camgeom::warp::{per_camera_pose_tensor, se3_exp_tensor};
use camgeom::CameraRig;
use diffcore::{Element, RngSeed, Tape, Tensor};

use crate::config::ModelConfig;
use crate::decoder::Decoder;
use crate::encoder::Encoder;
use crate::fusion::{Adapter, Fusion};
use crate::params::ParamSet;
use crate::pose::PoseNet;
use crate::semantic::SemanticEncoder;
use crate::Result;

/// The full network: pyramid encoder, semantic adapter, attention fusion,
/// depth decoder, and pose head over one ordered parameter store.
pub struct DepthNet<E: Element> {
    pub cfg: ModelConfig,
    pub params: ParamSet<E>,
    encoder: Encoder,
    semantic: SemanticEncoder,
    adapter: Adapter,
    fusion: Fusion,
    decoder: Decoder,
    pose: PoseNet,
}

/// One forward pass. Batch index `g * cameras + n` addresses frame `g`,
/// camera `n`; frame 0 is the source, frame 1 the target.
pub struct Forward<E: Element> {
    /// Full-size inverse depth, `[B, 1, H, W]`, bounded to the metric range.
    pub inv_depth: Tensor<E>,
    /// Fused features per level, `[B, C_l, H_l, W_l]`.
    pub fused: Vec<Tensor<E>>,
    /// Bounded decoder taps per level, `[B, 1, H_l, W_l]`.
    pub depth_taps: Vec<Tensor<E>>,
    /// Source-to-target motion, axis-angle plus translation, shape `[6]`.
    pub pose: Tensor<E>,
}

impl<E: Element> Forward<E> {
    /// Inverse depth of one image as `[H, W]`.
    pub fn inv_depth_of(&self, tape: &Tape<E>, b: usize) -> Result<Tensor<E>> {
        let s = self.inv_depth.shape();
        let one = tape.narrow(&self.inv_depth, 0, b, 1)?;
        Ok(tape.reshape(&one, &[s[2], s[3]])?)
    }
}

impl<E: Element> DepthNet<E> {
    pub fn new(cfg: ModelConfig, seed: RngSeed) -> Result<Self> {
        cfg.validate()?;
        let mut params = ParamSet::new();
        let encoder = Encoder::new(&mut params, &cfg.encoder_channels, seed.derive("net"));
        let semantic = SemanticEncoder::new(&mut params, cfg.semantic_channels, seed.derive("net"));
        let adapter = Adapter::new(&mut params, &cfg.encoder_channels, cfg.semantic_channels, seed.derive("net"));
        let fusion = Fusion::new(&mut params, &cfg.encoder_channels, cfg.fusion, cfg.frames, cfg.cameras, seed.derive("net"));
        let decoder = Decoder::new(&mut params, &cfg.encoder_channels, &cfg.decoder_channels, cfg.inv_depth_bounds(), seed.derive("net"));
        let pose = PoseNet::new(&mut params, &cfg.encoder_channels, cfg.pose_channels, cfg.frames, cfg.cameras, seed.derive("net"));
        Ok(DepthNet { cfg, params, encoder, semantic, adapter, fusion, decoder, pose })
    }

    /// Frozen semantic features for a batch of images.
    pub fn semantic_features(&self, tape: &Tape<E>, images: &Tensor<E>) -> Result<Tensor<E>> {
        self.semantic.forward(tape, &self.params, images)
    }

    pub fn forward(&self, tape: &Tape<E>, images: &Tensor<E>) -> Result<Forward<E>> {
        assert_eq!(
            images.shape(),
            &[self.cfg.batch(), 3, self.cfg.height, self.cfg.width],
            "images must arrive as [G*N, 3, H, W]"
        );
        let levels = self.encoder.forward(tape, &self.params, images)?;
        let adapted = if self.cfg.toggles.semantic_adapter {
            let sem = self.semantic.forward(tape, &self.params, images)?;
            let mut out = Vec::with_capacity(levels.len());
            for (l, f) in levels.iter().enumerate() {
                out.push(self.adapter.forward(tape, &self.params, l, f, &sem)?);
            }
            out
        } else {
            levels
        };
        let mut fused = Vec::with_capacity(adapted.len());
        for (l, f) in adapted.iter().enumerate() {
            fused.push(self.fusion.forward(tape, &self.params, l, f, &self.cfg.toggles)?);
        }
        let (inv_depth, depth_taps) = self.decoder.forward(tape, &self.params, &fused, (self.cfg.height, self.cfg.width))?;
        let pose = self.pose.forward(tape, &self.params, &fused, &depth_taps, &self.cfg.toggles)?;
        Ok(Forward { inv_depth, fused, depth_taps, pose })
    }

    /// Per-camera rigid motions `[4,4]` induced by the predicted global
    /// motion: conjugation by each camera's extrinsic. `invert` swaps the
    /// direction (target-to-source), which view synthesis needs.
    pub fn camera_motions(&self, tape: &Tape<E>, pose: &Tensor<E>, rig: &CameraRig, invert: bool) -> Result<Vec<Tensor<E>>> {
        let p = if invert { tape.neg(pose) } else { pose.clone() };
        let global = se3_exp_tensor(tape, &p)?;
        let mut out = Vec::with_capacity(rig.len());
        for cam in rig.cameras() {
            out.push(per_camera_pose_tensor(tape, &global, &cam.extrinsic)?);
        }
        Ok(out)
    }
}
