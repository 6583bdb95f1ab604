//! Surround-camera metric depth network: a shared convolutional pyramid with
//! cross-camera/cross-frame attention fusion and a frozen semantic-feature
//! adapter, a depth decoder bounded to a metric range, a depth-guided pose
//! head, the full training objective, and evaluation metrics.

pub mod checkpoint;
mod config;
mod decoder;
mod encoder;
mod error;
mod fusion;
pub mod losses;
pub mod metrics;
mod model;
mod params;
mod pose;
mod semantic;
pub mod ssim;

pub use config::{FusionConfig, ModelConfig, ModuleToggles};
pub use error::ModelError;
pub use losses::{LossBreakdown, LossWeights};
pub use model::{DepthNet, Forward};
pub use params::{ParamRef, ParamSet};

pub type Result<T> = std::result::Result<T, ModelError>;
