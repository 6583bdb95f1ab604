use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{GeomError, Intrinsics, Result, RigidTransform};

pub const RIG_SCHEMA_VERSION: u32 = 1;

/// One camera of the rig: intrinsics plus the camera-to-base extrinsic.
#[derive(Debug, Clone)]
pub struct RigCamera {
    pub intrinsics: Intrinsics,
    pub extrinsic: RigidTransform,
}

/// Ordered ring of cameras; index order defines clockwise adjacency, so the
/// spatial neighbor of camera `n` is `(n + 1) % N`.
#[derive(Debug, Clone)]
pub struct CameraRig {
    cameras: Vec<RigCamera>,
}

impl CameraRig {
    pub fn new(cameras: Vec<RigCamera>) -> Result<Self> {
        if cameras.len() < 2 {
            return Err(GeomError::BadRig(format!("need at least 2 cameras, got {}", cameras.len())));
        }
        for (i, cam) in cameras.iter().enumerate() {
            cam.intrinsics.validate().map_err(|e| GeomError::BadRig(format!("camera {i}: {e}")))?;
            cam.extrinsic.validate().map_err(|e| GeomError::BadRig(format!("camera {i}: {e}")))?;
        }
        Ok(CameraRig { cameras })
    }

    pub fn len(&self) -> usize {
        self.cameras.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn camera(&self, n: usize) -> &RigCamera {
        &self.cameras[n]
    }

    pub fn cameras(&self) -> &[RigCamera] {
        &self.cameras
    }

    pub fn neighbor_of(&self, n: usize) -> usize {
        (n + 1) % self.cameras.len()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = RigFile {
            schema_version: RIG_SCHEMA_VERSION,
            cameras: self
                .cameras
                .iter()
                .map(|c| RigFileCamera {
                    fx: c.intrinsics.fx,
                    fy: c.intrinsics.fy,
                    cx: c.intrinsics.cx,
                    cy: c.intrinsics.cy,
                    width: c.intrinsics.width,
                    height: c.intrinsics.height,
                    extrinsic: c.extrinsic.to_row_major().to_vec(),
                })
                .collect(),
        };
        let text = toml::to_string_pretty(&file).map_err(|e| GeomError::RigFile(e.to_string()))?;
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let file: RigFile = toml::from_str(&text).map_err(|e| GeomError::RigFile(e.to_string()))?;
        if file.schema_version != RIG_SCHEMA_VERSION {
            return Err(GeomError::RigFile(format!(
                "schema version {} unsupported (expected {RIG_SCHEMA_VERSION})",
                file.schema_version
            )));
        }
        let cameras = file
            .cameras
            .into_iter()
            .enumerate()
            .map(|(i, c)| {
                let ext: [f64; 16] = c
                    .extrinsic
                    .as_slice()
                    .try_into()
                    .map_err(|_| GeomError::RigFile(format!("camera {i}: extrinsic needs 16 values, got {}", c.extrinsic.len())))?;
                Ok(RigCamera {
                    intrinsics: Intrinsics::new(c.fx, c.fy, c.cx, c.cy, c.width, c.height)?,
                    extrinsic: RigidTransform::from_row_major(&ext)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        CameraRig::new(cameras)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RigFile {
    schema_version: u32,
    cameras: Vec<RigFileCamera>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RigFileCamera {
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
    width: usize,
    height: usize,
    extrinsic: Vec<f64>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::{se3_exp, Pose6};
    use nalgebra::Vector3;

    fn test_rig() -> CameraRig {
        let k = Intrinsics::new(40.0, 40.0, 23.5, 15.5, 48, 32).unwrap();
        let cams = (0..4)
            .map(|n| RigCamera {
                intrinsics: k,
                extrinsic: se3_exp(&Pose6::new(
                    Vector3::new(0.0, n as f64 * std::f64::consts::FRAC_PI_2, 0.0),
                    Vector3::new(0.1 * n as f64, 0.0, 0.2),
                )),
            })
            .collect();
        CameraRig::new(cams).unwrap()
    }

    #[test]
    fn adjacency_wraps_clockwise() {
        let rig = test_rig();
        assert_eq!(rig.neighbor_of(0), 1);
        assert_eq!(rig.neighbor_of(3), 0);
    }

    #[test]
    fn rejects_single_camera() {
        let k = Intrinsics::new(40.0, 40.0, 23.5, 15.5, 48, 32).unwrap();
        let cams = vec![RigCamera { intrinsics: k, extrinsic: RigidTransform::identity() }];
        assert!(CameraRig::new(cams).is_err());
    }

    #[test]
    fn file_round_trip_is_exact() {
        let rig = test_rig();
        let dir = std::env::temp_dir().join(format!("rig_test_{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("rig.toml");
        rig.save(&path).unwrap();
        let loaded = CameraRig::load(&path).unwrap();
        assert_eq!(loaded.len(), rig.len());
        for (a, b) in rig.cameras().iter().zip(loaded.cameras()) {
            assert_eq!(a.intrinsics, b.intrinsics);
            assert_eq!(a.extrinsic.to_row_major(), b.extrinsic.to_row_major());
        }
        std::fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn unknown_keys_and_bad_versions_are_rejected() {
        let dir = std::env::temp_dir().join(format!("rig_test_bad_{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("rig.toml");
        std::fs::write(&path, "schema_version = 99\ncameras = []\n").unwrap();
        assert!(CameraRig::load(&path).is_err());
        std::fs::write(&path, "schema_version = 1\nbogus = 3\ncameras = []\n").unwrap();
        assert!(CameraRig::load(&path).is_err());
        std::fs::remove_dir_all(&dir).unwrap();
    }
}
