use std::path::Path;

use depthnet::{FusionConfig, LossWeights, ModelConfig, ModuleToggles};
use serde::{Deserialize, Serialize};

use crate::RunError;

/// Flat experiment configuration. Unknown keys in a config file are errors,
/// so a misspelled ablation toggle cannot pass silently.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub seed: u64,
    /// Optional rig description file; empty means the built-in four-camera ring.
    pub rig: String,
    pub width: usize,
    pub height: usize,
    pub cameras: usize,
    pub pyramid_levels: usize,
    /// K: pyramid levels the losses run on.
    pub loss_levels: usize,
    /// T: diagonal steps of the curvature loss.
    pub curve_steps: usize,
    pub d_min: f64,
    pub d_max: f64,
    pub w_depth: f64,
    pub w_curv: f64,
    pub w_rep: f64,
    pub w_seg: f64,
    pub l1_mix: f64,
    pub stst_spatial: bool,
    pub stst_temporal: bool,
    pub semantic_adapter: bool,
    pub depth_enhanced_pose: bool,
    pub loss_depth: bool,
    pub loss_curv: bool,
    pub loss_rep: bool,
    pub loss_seg: bool,
    /// "sgd" (momentum) or "adam".
    pub optimizer: String,
    pub learning_rate: f64,
    pub momentum: f64,
    pub total_steps: usize,
    /// Fraction of steps spent on linear warm-up before cosine decay.
    pub warmup_frac: f64,
    pub checkpoint_every: usize,
    pub train_scenes: usize,
    pub val_scenes: usize,
    pub sparse_fraction: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 0,
            rig: String::new(),
            width: 96,
            height: 64,
            cameras: 4,
            pyramid_levels: 4,
            loss_levels: 3,
            curve_steps: 3,
            d_min: 1.0,
            d_max: 40.0,
            w_depth: 0.5,
            w_curv: 0.5,
            w_rep: 3.0,
            w_seg: 3.0,
            l1_mix: 0.2,
            stst_spatial: true,
            stst_temporal: true,
            semantic_adapter: true,
            depth_enhanced_pose: true,
            loss_depth: true,
            loss_curv: true,
            loss_rep: true,
            loss_seg: true,
            optimizer: "adam".into(),
            learning_rate: 1e-4,
            momentum: 0.9,
            total_steps: 2000,
            warmup_frac: 0.05,
            checkpoint_every: 500,
            train_scenes: 8,
            val_scenes: 2,
            sparse_fraction: 0.02,
        }
    }
}

const ENCODER_CHANNELS: [usize; 4] = [16, 32, 64, 128];
const DECODER_CHANNELS: [usize; 4] = [8, 16, 32, 64];

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, RunError> {
        let text = std::fs::read_to_string(path)?;
        let cfg: ExperimentConfig =
            toml::from_str(&text).map_err(|e| RunError::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn save(&self, path: &Path) -> Result<(), RunError> {
        let text = toml::to_string_pretty(self).map_err(|e| RunError::Config(e.to_string()))?;
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn validate(&self) -> Result<(), RunError> {
        if !(1..=4).contains(&self.pyramid_levels) {
            return Err(RunError::Config(format!("pyramid_levels {} outside 1..=4", self.pyramid_levels)));
        }
        if self.loss_levels == 0 || self.loss_levels > self.pyramid_levels + 1 {
            return Err(RunError::Config(format!("loss_levels {} invalid", self.loss_levels)));
        }
        if !(0.0..=1.0).contains(&self.l1_mix) {
            return Err(RunError::Config("l1_mix must be in [0, 1]".into()));
        }
        if !(0.0..1.0).contains(&self.warmup_frac) {
            return Err(RunError::Config("warmup_frac must be in [0, 1)".into()));
        }
        match self.optimizer.as_str() {
            "sgd" | "adam" => {}
            other => return Err(RunError::Config(format!("optimizer '{other}' (expected sgd or adam)"))),
        }
        if self.train_scenes == 0 || self.val_scenes == 0 {
            return Err(RunError::Config("need at least one train and one val scene".into()));
        }
        self.model_config().validate().map_err(|e| RunError::Config(e.to_string()))?;
        Ok(())
    }

    /// Ablation rows: modules 1-4 mirror none / attention / +semantic /
    /// +depth-guided pose; losses 5-7 mirror curvature-only / depth-only /
    /// both, always on top of the photometric pair.
    pub fn apply_preset(&mut self, preset: &str) -> Result<(), RunError> {
        match preset {
            "none" | "row1" => {
                self.stst_spatial = false;
                self.stst_temporal = false;
                self.semantic_adapter = false;
                self.depth_enhanced_pose = false;
            }
            "attention" | "row2" => {
                self.stst_spatial = true;
                self.stst_temporal = true;
                self.semantic_adapter = false;
                self.depth_enhanced_pose = false;
            }
            "attention-semantic" | "row3" => {
                self.stst_spatial = true;
                self.stst_temporal = true;
                self.semantic_adapter = true;
                self.depth_enhanced_pose = false;
            }
            "full" | "row4" => {
                self.stst_spatial = true;
                self.stst_temporal = true;
                self.semantic_adapter = true;
                self.depth_enhanced_pose = true;
            }
            "curv-only" | "row5" => {
                self.loss_depth = false;
                self.loss_curv = true;
            }
            "depth-only" | "row6" => {
                self.loss_depth = true;
                self.loss_curv = false;
            }
            "depth-curv" | "row7" => {
                self.loss_depth = true;
                self.loss_curv = true;
            }
            other => return Err(RunError::Usage(format!("unknown preset '{other}'"))),
        }
        Ok(())
    }

    pub fn model_config(&self) -> ModelConfig {
        let l = self.pyramid_levels;
        let mut cfg = ModelConfig::with_extents(self.height, self.width, self.cameras);
        cfg.encoder_channels = ENCODER_CHANNELS[..l].to_vec();
        cfg.decoder_channels = DECODER_CHANNELS[..l].to_vec();
        cfg.fusion = FusionConfig::default();
        cfg.toggles = ModuleToggles {
            spatial_attention: self.stst_spatial,
            temporal_attention: self.stst_temporal,
            semantic_adapter: self.semantic_adapter,
            depth_enhanced_pose: self.depth_enhanced_pose,
        };
        cfg.d_min = self.d_min;
        cfg.d_max = self.d_max;
        cfg
    }

    pub fn loss_weights(&self) -> LossWeights {
        LossWeights {
            l1_mix: self.l1_mix,
            w_depth: self.w_depth,
            w_curv: self.w_curv,
            w_rep: self.w_rep,
            w_seg: self.w_seg,
            levels: self.loss_levels,
            curve_steps: self.curve_steps,
            enable_depth: self.loss_depth,
            enable_curv: self.loss_curv,
            enable_rep: self.loss_rep,
            enable_seg: self.loss_seg,
        }
    }

    pub fn warmup_steps(&self) -> usize {
        ((self.total_steps as f64) * self.warmup_frac).ceil() as usize
    }

    /// Stable hash of the canonical serialized form (FNV-1a 64).
    pub fn hash(&self) -> String {
        let text = toml::to_string(self).expect("serializable config");
        let mut h = 0xcbf29ce484222325u64;
        for b in text.as_bytes() {
            h ^= *b as u64;
            h = h.wrapping_mul(0x100000001b3);
        }
        format!("{h:016x}")
    }

    pub fn rig(&self) -> Result<camgeom::CameraRig, RunError> {
        if self.rig.is_empty() {
            Ok(synthrig::default_rig(self.width, self.height).map_err(|e| RunError::Config(e.to_string()))?)
        } else {
            Ok(camgeom::CameraRig::load(Path::new(&self.rig)).map_err(|e| RunError::Config(e.to_string()))?)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_validates_and_hash_is_stable() {
        let cfg = ExperimentConfig::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.hash(), cfg.clone().hash());
        let mut other = cfg.clone();
        other.seed = 1;
        assert_ne!(cfg.hash(), other.hash());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let r: Result<ExperimentConfig, _> = toml::from_str("seed = 3\nlos_depth = false\n");
        assert!(r.is_err(), "typo'd key must not parse");
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cfg.toml");
        let mut cfg = ExperimentConfig::default();
        cfg.apply_preset("row2").unwrap();
        cfg.save(&path).unwrap();
        assert_eq!(ExperimentConfig::load(&path).unwrap(), cfg);
    }

    #[test]
    fn presets_reproduce_the_ablation_rows() {
        let base = ExperimentConfig::default();
        let mut r1 = base.clone();
        r1.apply_preset("row1").unwrap();
        assert!(!r1.stst_spatial && !r1.stst_temporal && !r1.semantic_adapter && !r1.depth_enhanced_pose);
        let mut r2 = base.clone();
        r2.apply_preset("row2").unwrap();
        assert!(r2.stst_spatial && r2.stst_temporal && !r2.semantic_adapter);
        let mut r5 = base.clone();
        r5.apply_preset("row5").unwrap();
        assert!(!r5.loss_depth && r5.loss_curv && r5.loss_rep);
        assert!(base.clone().apply_preset("row9").is_err());
    }
}
