use nalgebra::{Matrix3, Matrix4, Vector3};

use crate::{GeomError, Result};

/// Angle below which exp/log switch to their series expansions.
const SMALL_ANGLE: f64 = 1e-8;
/// log() is rejected this close to the pi chart boundary.
const CHART_LIMIT: f64 = std::f64::consts::PI - 1e-6;

/// 6-DOF pose: axis-angle rotation (radians * unit axis) plus translation
/// (meters). Canonical chart: rotation magnitude below pi.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose6 {
    pub axis_angle: Vector3<f64>,
    pub translation: Vector3<f64>,
}

impl Pose6 {
    pub fn new(axis_angle: Vector3<f64>, translation: Vector3<f64>) -> Self {
        Pose6 { axis_angle, translation }
    }

    pub fn identity() -> Self {
        Pose6 { axis_angle: Vector3::zeros(), translation: Vector3::zeros() }
    }

    pub fn from_slice(v: &[f64; 6]) -> Self {
        Pose6 {
            axis_angle: Vector3::new(v[0], v[1], v[2]),
            translation: Vector3::new(v[3], v[4], v[5]),
        }
    }

    pub fn to_array(&self) -> [f64; 6] {
        [
            self.axis_angle.x,
            self.axis_angle.y,
            self.axis_angle.z,
            self.translation.x,
            self.translation.y,
            self.translation.z,
        ]
    }

    pub fn inverse(&self) -> Pose6 {
        se3_log(&se3_exp(self).inverse()).expect("inverse stays inside the chart")
    }
}

/// 4x4 homogeneous rigid transform. The rotation block stays orthonormal to
/// 1e-9 and the last row is exactly `[0,0,0,1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    matrix: Matrix4<f64>,
}

impl RigidTransform {
    pub fn identity() -> Self {
        RigidTransform { matrix: Matrix4::identity() }
    }

    /// Validates rigidity on construction.
    pub fn from_matrix(matrix: Matrix4<f64>) -> Result<Self> {
        let t = RigidTransform { matrix };
        t.validate()?;
        Ok(t)
    }

    pub fn from_parts(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&rotation);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&translation);
        Self::from_matrix(m)
    }

    /// 16 row-major entries (file interchange layout).
    pub fn from_row_major(v: &[f64; 16]) -> Result<Self> {
        Self::from_matrix(Matrix4::from_row_slice(v))
    }

    pub fn to_row_major(&self) -> [f64; 16] {
        let mut out = [0.0; 16];
        for r in 0..4 {
            for c in 0..4 {
                out[r * 4 + c] = self.matrix[(r, c)];
            }
        }
        out
    }

    pub fn matrix(&self) -> &Matrix4<f64> {
        &self.matrix
    }

    pub fn rotation(&self) -> Matrix3<f64> {
        self.matrix.fixed_view::<3, 3>(0, 0).into_owned()
    }

    pub fn translation(&self) -> Vector3<f64> {
        self.matrix.fixed_view::<3, 1>(0, 3).into_owned()
    }

    pub fn validate(&self) -> Result<()> {
        let r = self.rotation();
        let gram = r.transpose() * r - Matrix3::identity();
        let max = gram.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if max > 1e-9 {
            return Err(GeomError::NotRigid(format!("|R^T R - I| = {max:.3e}")));
        }
        let det = r.determinant();
        if (det - 1.0).abs() > 1e-9 {
            return Err(GeomError::NotRigid(format!("det(R) = {det}")));
        }
        let last = self.matrix.row(3);
        if last[0] != 0.0 || last[1] != 0.0 || last[2] != 0.0 || last[3] != 1.0 {
            return Err(GeomError::NotRigid(format!("last row {:?}", [last[0], last[1], last[2], last[3]])));
        }
        Ok(())
    }

    /// Closed-form rigid inverse `(R^T, -R^T t)`.
    pub fn inverse(&self) -> RigidTransform {
        let r = self.rotation();
        let t = self.translation();
        let rt = r.transpose();
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&rt);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&(-(rt * t)));
        RigidTransform { matrix: m }
    }

    pub fn compose(&self, rhs: &RigidTransform) -> RigidTransform {
        RigidTransform { matrix: self.matrix * rhs.matrix }
    }

    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation() * p + self.translation()
    }
}

fn skew(w: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -w.z, w.y, w.z, 0.0, -w.x, -w.y, w.x, 0.0)
}

/// Exponential map: Rodrigues rotation plus the left-Jacobian-transported
/// translation. Angles below the small-angle threshold use second-order
/// Taylor coefficients.
pub fn se3_exp(p: &Pose6) -> RigidTransform {
    let w = p.axis_angle;
    let theta2 = w.norm_squared();
    let theta = theta2.sqrt();
    let k = skew(&w);
    let k2 = k * k;
    // R = I + A K + B K^2 ; V = I + B K + C K^2
    let (a, b, c) = if theta < SMALL_ANGLE {
        (1.0 - theta2 / 6.0, 0.5 - theta2 / 24.0, 1.0 / 6.0 - theta2 / 120.0)
    } else {
        let a = theta.sin() / theta;
        let b = (1.0 - theta.cos()) / theta2;
        let c = (1.0 - a) / theta2;
        (a, b, c)
    };
    let r = Matrix3::identity() + k * a + k2 * b;
    let v = Matrix3::identity() + k * b + k2 * c;
    let mut m = Matrix4::identity();
    m.fixed_view_mut::<3, 3>(0, 0).copy_from(&r);
    m.fixed_view_mut::<3, 1>(0, 3).copy_from(&(v * p.translation));
    RigidTransform { matrix: m }
}

/// Logarithm map, the inverse chart of [`se3_exp`]. Errors when the rotation
/// angle reaches the pi boundary where the axis is not unique.
pub fn se3_log(t: &RigidTransform) -> Result<Pose6> {
    let r = t.rotation();
    let trace = r.trace();
    let cos_theta = ((trace - 1.0) / 2.0).clamp(-1.0, 1.0);
    let theta = cos_theta.acos();
    if theta >= CHART_LIMIT {
        return Err(GeomError::ChartSingularity { angle: theta, limit: CHART_LIMIT });
    }
    let w = if theta < SMALL_ANGLE {
        // R ~ I + skew(w): read the skew part directly.
        Vector3::new(
            (r[(2, 1)] - r[(1, 2)]) / 2.0,
            (r[(0, 2)] - r[(2, 0)]) / 2.0,
            (r[(1, 0)] - r[(0, 1)]) / 2.0,
        )
    } else {
        let scale = theta / (2.0 * theta.sin());
        Vector3::new(
            (r[(2, 1)] - r[(1, 2)]) * scale,
            (r[(0, 2)] - r[(2, 0)]) * scale,
            (r[(1, 0)] - r[(0, 1)]) * scale,
        )
    };
    let k = skew(&w);
    let k2 = k * k;
    // V^{-1} = I - K/2 + (1/theta^2)(1 - A/(2B)) K^2
    let v_inv = if theta < SMALL_ANGLE {
        Matrix3::identity() - k * 0.5 + k2 * (1.0 / 12.0)
    } else {
        let theta2 = theta * theta;
        let a = theta.sin() / theta;
        let b = (1.0 - theta.cos()) / theta2;
        Matrix3::identity() - k * 0.5 + k2 * ((1.0 - a / (2.0 * b)) / theta2)
    };
    Ok(Pose6 { axis_angle: w, translation: v_inv * t.translation() })
}

/// Conjugates a base-frame motion into one camera's frame:
/// `E^{-1} * P * E` with `E` the camera-to-base extrinsic.
pub fn per_camera_pose(p_global: &RigidTransform, extrinsic: &RigidTransform) -> RigidTransform {
    extrinsic.inverse().compose(p_global).compose(extrinsic)
}
