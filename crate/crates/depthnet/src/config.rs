use crate::{ModelError, Result};

/// Unified attention extents shared by every fusion block.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FusionConfig {
    /// Channel width every level is mapped to before attention.
    pub channels: usize,
    /// Spatial extents every level is resampled to.
    pub height: usize,
    pub width: usize,
    /// Reduced embedding width used for the attention tokens.
    pub proj_channels: usize,
    /// Hidden width of the post-attention feed-forward stage.
    pub ffn_hidden: usize,
}

impl Default for FusionConfig {
    fn default() -> Self {
        FusionConfig { channels: 32, height: 8, width: 12, proj_channels: 16, ffn_hidden: 64 }
    }
}

/// Ablation switches. All-off reduces the model to pyramid + decoder with
/// a pose head fed by image features alone.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModuleToggles {
    pub spatial_attention: bool,
    pub temporal_attention: bool,
    pub semantic_adapter: bool,
    pub depth_enhanced_pose: bool,
}

impl Default for ModuleToggles {
    fn default() -> Self {
        ModuleToggles {
            spatial_attention: true,
            temporal_attention: true,
            semantic_adapter: true,
            depth_enhanced_pose: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    /// Adjacent frames per example; the pose head pairs them as src -> tgt.
    pub frames: usize,
    pub cameras: usize,
    pub height: usize,
    pub width: usize,
    /// Channel widths of the visual pyramid, one per level (coarsening).
    pub encoder_channels: Vec<usize>,
    /// Channel widths of the depth decoder, aligned with the pyramid levels.
    pub decoder_channels: Vec<usize>,
    /// Semantic feature extents: channels fixed, spatial = image / 8.
    pub semantic_channels: usize,
    pub fusion: FusionConfig,
    /// Channel width each level is compressed to for the pose trunk.
    pub pose_channels: usize,
    pub toggles: ModuleToggles,
    /// Metric depth bounds; the decoder output lives in
    /// `[1/d_max, 1/d_min]` by construction.
    pub d_min: f64,
    pub d_max: f64,
}

impl ModelConfig {
    pub fn with_extents(height: usize, width: usize, cameras: usize) -> Self {
        ModelConfig {
            frames: 2,
            cameras,
            height,
            width,
            encoder_channels: vec![16, 32, 64, 128],
            decoder_channels: vec![8, 16, 32, 64],
            semantic_channels: 32,
            fusion: FusionConfig::default(),
            pose_channels: 32,
            toggles: ModuleToggles::default(),
            d_min: 1.0,
            d_max: 40.0,
        }
    }

    pub fn levels(&self) -> usize {
        self.encoder_channels.len()
    }

    pub fn batch(&self) -> usize {
        self.frames * self.cameras
    }

    /// Spatial extents of pyramid level `l` (level 0 = half resolution).
    pub fn level_extents(&self, l: usize) -> (usize, usize) {
        (self.height >> (l + 1), self.width >> (l + 1))
    }

    pub fn semantic_extents(&self) -> (usize, usize) {
        (self.height / 8, self.width / 8)
    }

    pub fn validate(&self) -> Result<()> {
        let l = self.levels();
        if l == 0 {
            return Err(ModelError::Config("encoder needs at least one level".into()));
        }
        if self.decoder_channels.len() != l {
            return Err(ModelError::Config("decoder channel list must match the pyramid depth".into()));
        }
        let div = 1usize << l;
        if self.height % div != 0 || self.width % div != 0 {
            return Err(ModelError::Config(format!(
                "image extents {}x{} must be divisible by 2^{l}",
                self.height, self.width
            )));
        }
        if self.height % 8 != 0 || self.width % 8 != 0 {
            return Err(ModelError::Config("extents must be divisible by 8 for the semantic grid".into()));
        }
        if self.frames != 2 {
            return Err(ModelError::Config(format!("temporal attention pairs exactly 2 frames, got {}", self.frames)));
        }
        if self.cameras < 2 {
            return Err(ModelError::Config(format!("spatial attention needs at least 2 cameras, got {}", self.cameras)));
        }
        if !(self.d_min > 0.0 && self.d_max > self.d_min) {
            return Err(ModelError::Config(format!("bad depth range [{}, {}]", self.d_min, self.d_max)));
        }
        Ok(())
    }

    /// Decoder activation bounds: inverse depth in `[lo, hi]`.
    pub fn inv_depth_bounds(&self) -> (f64, f64) {
        (1.0 / self.d_max, 1.0 / self.d_min)
    }
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self::with_extents(64, 96, 4)
    }
}
