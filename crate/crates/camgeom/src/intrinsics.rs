use serde::{Deserialize, Serialize};

use crate::{GeomError, Result};

/// Pinhole intrinsics in pixel units, tied to a concrete image extent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl Intrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: usize, height: usize) -> Result<Self> {
        let k = Intrinsics { fx, fy, cx, cy, width, height };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err(GeomError::BadIntrinsics(format!("focal lengths must be positive: fx={}, fy={}", self.fx, self.fy)));
        }
        if !(0.0 <= self.cx && self.cx < self.width as f64) || !(0.0 <= self.cy && self.cy < self.height as f64) {
            return Err(GeomError::BadIntrinsics(format!(
                "principal point ({}, {}) outside {}x{}",
                self.cx, self.cy, self.width, self.height
            )));
        }
        if self.width == 0 || self.height == 0 {
            return Err(GeomError::BadIntrinsics("zero image extent".into()));
        }
        Ok(())
    }

    /// Symmetric pinhole from a horizontal field of view (radians), principal
    /// point at the image center.
    pub fn from_hfov(hfov: f64, width: usize, height: usize) -> Result<Self> {
        let fx = width as f64 / (2.0 * (hfov / 2.0).tan());
        Intrinsics::new(fx, fx, (width as f64 - 1.0) / 2.0, (height as f64 - 1.0) / 2.0, width, height)
    }

    /// Intrinsics of the dyadic pyramid level `k`: every parameter scales by
    /// `2^-k`, including the image extents.
    pub fn at_level(&self, k: usize) -> Result<Self> {
        let s = 1.0 / (1 << k) as f64;
        if self.width % (1 << k) != 0 || self.height % (1 << k) != 0 {
            return Err(GeomError::BadIntrinsics(format!(
                "extent {}x{} not divisible for pyramid level {k}",
                self.width, self.height
            )));
        }
        Ok(Intrinsics {
            fx: self.fx * s,
            fy: self.fy * s,
            cx: self.cx * s,
            cy: self.cy * s,
            width: self.width >> k,
            height: self.height >> k,
        })
    }

    /// Camera-frame ray direction through a pixel center (unit z).
    pub fn ray(&self, x: f64, y: f64) -> nalgebra::Vector3<f64> {
        nalgebra::Vector3::new((x - self.cx) / self.fx, (y - self.cy) / self.fy, 1.0)
    }

    /// Projects a camera-frame point; `None` when at or behind the near plane.
    pub fn project(&self, p: &nalgebra::Vector3<f64>, z_min: f64) -> Option<(f64, f64)> {
        if p.z <= z_min {
            return None;
        }
        Some((self.fx * p.x / p.z + self.cx, self.fy * p.y / p.z + self.cy))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn level_scaling_halves_everything() {
        let k = Intrinsics::new(100.0, 110.0, 47.5, 31.5, 96, 64).unwrap();
        let k1 = k.at_level(1).unwrap();
        assert_eq!(k1.width, 48);
        assert_eq!(k1.height, 32);
        assert!((k1.fx - 50.0).abs() < 1e-12);
        assert!((k1.cx - 23.75).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(Intrinsics::new(0.0, 1.0, 0.0, 0.0, 8, 8).is_err());
        assert!(Intrinsics::new(10.0, 10.0, 9.0, 0.0, 8, 8).is_err());
    }

    #[test]
    fn principal_ray_projects_to_principal_point() {
        let k = Intrinsics::new(50.0, 50.0, 31.5, 23.5, 64, 48).unwrap();
        for z in [0.5, 2.0, 100.0] {
            let (x, y) = k.project(&nalgebra::Vector3::new(0.0, 0.0, z), 1e-4).unwrap();
            assert!((x - k.cx).abs() < 1e-12 && (y - k.cy).abs() < 1e-12);
        }
        assert!(k.project(&nalgebra::Vector3::new(0.0, 0.0, -1.0), 1e-4).is_none());
    }
}
