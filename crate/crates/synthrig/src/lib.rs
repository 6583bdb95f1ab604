//! Deterministic synthetic surround-rig scenes: ray-cast rendering with
//! exact analytic depth, sparse range samples, masks, frame-to-frame motion,
//! and a scale-ambiguous dense depth prior. Everything derives from a seed,
//! bit-exactly, so these framesets serve as the oracle for the geometric and
//! end-to-end tests.

mod dataset;
mod error;
mod frameset;
mod render;
mod scene;
mod texture;
pub mod verify;

pub use dataset::{load_frameset, save_frameset, DatasetManifest};
pub use error::SynthError;
pub use frameset::{
    make_prior_depth, sample_sparse, FrameSet, PixelMask, PriorDepth, SparseDepthTarget, SparseSample,
};
pub use render::{analytic_correspondences, frameset_from_seed, render_frameset, render_view, RenderedView};
pub use scene::{default_rig, generate_scene, vehicle_motion, Primitive, Scene, SceneConfig};
pub use texture::ValueNoise;

pub type Result<T> = std::result::Result<T, SynthError>;
