//! Camera and rig geometry: SE(3) pose algebra, pinhole projection, and the
//! pixel-correspondence machinery behind differentiable image warping.
//!
//! Coordinate conventions, fixed here once for the whole workspace:
//! - Camera frame: `x` right, `y` down, `z` forward (optical axis).
//!   "Depth" is the camera-frame `z` coordinate, in meters.
//! - Pixel coordinates: integer coordinates address pixel centers;
//!   `(0, 0)` is the center of the top-left pixel.
//! - Extrinsic `E_n` maps camera-n coordinates INTO the rig base frame:
//!   `p_base = E_n * p_cam`. The inverse therefore takes base-frame points
//!   into the camera.
//! - A frame-to-frame motion `P` maps coordinates of a fixed world point
//!   expressed in the source frame to the same point expressed in the
//!   target frame.

mod error;
mod intrinsics;
mod pose;
mod rig;
pub mod warp;

pub use error::GeomError;
pub use intrinsics::Intrinsics;
pub use pose::{per_camera_pose, se3_exp, se3_log, Pose6, RigidTransform};
pub use rig::{CameraRig, RigCamera};

pub type Result<T> = std::result::Result<T, GeomError>;
