//! Pixel-correspondence generation for view synthesis.
//!
//! Two parallel implementations with identical conventions: a plain f64
//! version for oracles and dataset tooling, and a tensor version through
//! which training gradients flow (into the inverse depth and the pose).

use diffcore::{lit, Element, Tape, Tensor};
use nalgebra::Vector3;

use crate::{GeomError, Intrinsics, Result, RigidTransform};

/// Points at or behind this camera-frame depth are invalid.
pub const Z_MIN: f64 = 1e-4;

// ---------------------------------------------------------------------------
// f64 reference path
// ---------------------------------------------------------------------------

/// Camera-frame point of pixel `(x, y)` with inverse depth `d_inv`.
pub fn backproject_pixel(k: &Intrinsics, x: f64, y: f64, d_inv: f64) -> Result<Vector3<f64>> {
    if d_inv <= 0.0 {
        return Err(GeomError::NonPositiveInverseDepth(d_inv));
    }
    Ok(k.ray(x, y) / d_inv)
}

/// Reference correspondence map: for every pixel of the inverse-depth map
/// (extents of `k_src`), the coordinate of the same scene point in the
/// `k_tgt` image after applying `pose` (source-camera to target-camera).
///
/// Returns `(x, y)` pairs in scan order plus a validity mask
/// (in front of the camera and inside the target pixel hull).
pub fn warp_coords_ref(
    inv_depth: &[f64],
    k_src: &Intrinsics,
    k_tgt: &Intrinsics,
    pose: &RigidTransform,
) -> Result<(Vec<(f64, f64)>, Vec<bool>)> {
    let (w, h) = (k_src.width, k_src.height);
    if inv_depth.len() != w * h {
        return Err(GeomError::BadIntrinsics(format!("inverse depth length {} vs {}x{}", inv_depth.len(), w, h)));
    }
    let mut coords = Vec::with_capacity(w * h);
    let mut valid = Vec::with_capacity(w * h);
    let r = pose.rotation();
    let t = pose.translation();
    for y in 0..h {
        for x in 0..w {
            let d_inv = inv_depth[y * w + x];
            if d_inv <= 0.0 {
                return Err(GeomError::NonPositiveInverseDepth(d_inv));
            }
            let p = r * (k_src.ray(x as f64, y as f64) / d_inv) + t;
            let ok = p.z > Z_MIN;
            let zs = p.z.max(Z_MIN);
            let u = k_tgt.fx * p.x / zs + k_tgt.cx;
            let v = k_tgt.fy * p.y / zs + k_tgt.cy;
            let inside =
                u >= 0.0 && u <= (k_tgt.width - 1) as f64 && v >= 0.0 && v <= (k_tgt.height - 1) as f64;
            coords.push((u, v));
            valid.push(ok && inside);
        }
    }
    Ok((coords, valid))
}

// ---------------------------------------------------------------------------
// Differentiable path
// ---------------------------------------------------------------------------

/// A rigid transform as a constant 4x4 tensor.
pub fn rigid_to_tensor<E: Element>(t: &RigidTransform) -> Tensor<E> {
    let data: Vec<E> = t.to_row_major().iter().map(|&v| lit(v)).collect();
    Tensor::from_vec(&[4, 4], data).expect("4x4")
}

/// Differentiable exponential map: 6-vector `[axis-angle | translation]`
/// to a 4x4 rigid transform tensor. The angle branch is chosen from the
/// forward value; both branches agree through second order.
pub fn se3_exp_tensor<E: Element>(tape: &Tape<E>, p: &Tensor<E>) -> Result<Tensor<E>> {
    assert_eq!(p.shape(), &[6], "pose tensor must have shape [6]");
    let w = tape.narrow(p, 0, 0, 3)?;
    let t = tape.narrow(p, 0, 3, 3)?;
    let theta2 = tape.sum_all(&tape.mul(&w, &w)?);

    let small = theta2.item().to_f64().unwrap() < 1e-10;
    let (a, b, c) = if small {
        // 1 - t2/6, 1/2 - t2/24, 1/6 - t2/120
        let a = tape.add_scalar(&tape.scale(&theta2, lit(-1.0 / 6.0)), E::one());
        let b = tape.add_scalar(&tape.scale(&theta2, lit(-1.0 / 24.0)), lit(0.5));
        let c = tape.add_scalar(&tape.scale(&theta2, lit(-1.0 / 120.0)), lit(1.0 / 6.0));
        (a, b, c)
    } else {
        let theta = tape.sqrt(&theta2);
        let a = tape.div(&tape.sin(&theta), &theta)?;
        let one_minus_cos = tape.add_scalar(&tape.neg(&tape.cos(&theta)), E::one());
        let b = tape.div(&one_minus_cos, &theta2)?;
        let one_minus_a = tape.add_scalar(&tape.neg(&a), E::one());
        let c = tape.div(&one_minus_a, &theta2)?;
        (a, b, c)
    };

    let k = skew_tensor(tape, &w)?;
    let k2 = tape.matmul(&k, &k)?;
    let eye = Tensor::from_vec(&[3, 3], vec![
        E::one(), E::zero(), E::zero(),
        E::zero(), E::one(), E::zero(),
        E::zero(), E::zero(), E::one(),
    ])?;
    let r = tape.add(&eye, &tape.add(&tape.mul(&k, &a)?, &tape.mul(&k2, &b)?)?)?;
    let v = tape.add(&eye, &tape.add(&tape.mul(&k, &b)?, &tape.mul(&k2, &c)?)?)?;
    let vt = tape.matmul(&v, &tape.reshape(&t, &[3, 1])?)?;
    let top = tape.concat(&[&r, &vt], 1)?;
    let bottom = Tensor::from_vec(&[1, 4], vec![E::zero(), E::zero(), E::zero(), E::one()])?;
    Ok(tape.concat(&[&top, &bottom], 0)?)
}

fn skew_tensor<E: Element>(tape: &Tape<E>, w: &Tensor<E>) -> Result<Tensor<E>> {
    let wx = tape.narrow(w, 0, 0, 1)?;
    let wy = tape.narrow(w, 0, 1, 1)?;
    let wz = tape.narrow(w, 0, 2, 1)?;
    let zero = Tensor::zeros(&[1]);
    let row0 = tape.concat(&[&zero, &tape.neg(&wz), &wy], 0)?;
    let row1 = tape.concat(&[&wz, &zero, &tape.neg(&wx)], 0)?;
    let row2 = tape.concat(&[&tape.neg(&wy), &wx, &zero], 0)?;
    let flat = tape.concat(&[&row0, &row1, &row2], 0)?;
    Ok(tape.reshape(&flat, &[3, 3])?)
}

/// Differentiable conjugation `E^{-1} * P * E` with a constant extrinsic.
pub fn per_camera_pose_tensor<E: Element>(
    tape: &Tape<E>,
    p_global: &Tensor<E>,
    extrinsic: &RigidTransform,
) -> Result<Tensor<E>> {
    let e = rigid_to_tensor::<E>(extrinsic);
    let e_inv = rigid_to_tensor::<E>(&extrinsic.inverse());
    Ok(tape.matmul(&e_inv, &tape.matmul(p_global, &e)?)?)
}

/// Differentiable backprojection of a `[H, W]` inverse-depth map into a
/// `[3, H*W]` camera-frame point grid.
pub fn backproject<E: Element>(tape: &Tape<E>, inv_depth: &Tensor<E>, k: &Intrinsics) -> Result<Tensor<E>> {
    let (h, w) = depth_extents(inv_depth, k)?;
    if let Some(&bad) = inv_depth.data().iter().find(|v| **v <= E::zero()) {
        return Err(GeomError::NonPositiveInverseDepth(bad.to_f64().unwrap()));
    }
    let n = h * w;
    let mut ray_x = Vec::with_capacity(n);
    let mut ray_y = Vec::with_capacity(n);
    for y in 0..h {
        for x in 0..w {
            ray_x.push(lit::<E>((x as f64 - k.cx) / k.fx));
            ray_y.push(lit::<E>((y as f64 - k.cy) / k.fy));
        }
    }
    let ray_x = Tensor::from_vec(&[n], ray_x)?;
    let ray_y = Tensor::from_vec(&[n], ray_y)?;
    let z = tape.recip(&tape.reshape(inv_depth, &[n])?);
    let px = tape.reshape(&tape.mul(&ray_x, &z)?, &[1, n])?;
    let py = tape.reshape(&tape.mul(&ray_y, &z)?, &[1, n])?;
    let pz = tape.reshape(&z, &[1, n])?;
    Ok(tape.concat(&[&px, &py, &pz], 0)?)
}

/// Differentiable projection of `[3, N]` camera-frame points to `[N, 2]`
/// pixel coordinates; the mask flags points in front of the near plane.
/// Behind-camera points get clamped-depth coordinates, not errors.
pub fn project<E: Element>(tape: &Tape<E>, points: &Tensor<E>, k: &Intrinsics) -> Result<(Tensor<E>, Vec<bool>)> {
    assert_eq!(points.shape()[0], 3, "points must be [3, N]");
    let n = points.shape()[1];
    let x = tape.narrow(points, 0, 0, 1)?;
    let y = tape.narrow(points, 0, 1, 1)?;
    let z = tape.narrow(points, 0, 2, 1)?;
    let z_min = lit::<E>(Z_MIN);
    let in_front: Vec<bool> = z.data().iter().map(|&v| v > z_min).collect();
    // max(z, Z_MIN), saturating the gradient behind the near plane
    let z_safe = tape.add_scalar(&tape.relu(&tape.add_scalar(&z, -z_min)), z_min);
    let u = tape.add_scalar(&tape.scale(&tape.div(&x, &z_safe)?, lit(k.fx)), lit(k.cx));
    let v = tape.add_scalar(&tape.scale(&tape.div(&y, &z_safe)?, lit(k.fy)), lit(k.cy));
    let coords = tape.concat(&[&tape.reshape(&u, &[n, 1])?, &tape.reshape(&v, &[n, 1])?], 1)?;
    Ok((coords, in_front))
}

/// Correspondence grid produced by [`warp_coords`].
pub struct WarpGrid<E: Element> {
    /// Target-image pixel positions, `[H, W, 2]`.
    pub coords: Tensor<E>,
    /// Depth of each point in the target camera frame, `[H, W]`.
    pub depth: Tensor<E>,
    /// In front of the near plane and inside the target pixel hull.
    pub valid: Vec<bool>,
}

/// Differentiable correspondence grid: composition of [`backproject`], the
/// rigid motion `pose` ([4,4] tensor, source-camera to target-camera), and
/// [`project`] into the target intrinsics.
pub fn warp_coords<E: Element>(
    tape: &Tape<E>,
    inv_depth: &Tensor<E>,
    k_src: &Intrinsics,
    k_tgt: &Intrinsics,
    pose: &Tensor<E>,
) -> Result<WarpGrid<E>> {
    let (h, w) = depth_extents(inv_depth, k_src)?;
    let pts = backproject(tape, inv_depth, k_src)?;
    let r = tape.narrow(&tape.narrow(pose, 0, 0, 3)?, 1, 0, 3)?;
    let t = tape.narrow(&tape.narrow(pose, 0, 0, 3)?, 1, 3, 1)?;
    let moved = tape.add(&tape.matmul(&r, &pts)?, &t)?;
    let depth = tape.reshape(&tape.narrow(&moved, 0, 2, 1)?, &[h, w])?;
    let (flat, in_front) = project(tape, &moved, k_tgt)?;
    let coords = tape.reshape(&flat, &[h, w, 2])?;

    let max_x = lit::<E>((k_tgt.width - 1) as f64);
    let max_y = lit::<E>((k_tgt.height - 1) as f64);
    let cd = coords.data();
    let valid: Vec<bool> = (0..h * w)
        .map(|i| {
            let u = cd[i * 2];
            let v = cd[i * 2 + 1];
            in_front[i] && u >= E::zero() && u <= max_x && v >= E::zero() && v <= max_y
        })
        .collect();
    Ok(WarpGrid { coords, depth, valid })
}

fn depth_extents<E: Element>(inv_depth: &Tensor<E>, k: &Intrinsics) -> Result<(usize, usize)> {
    let s = inv_depth.shape();
    let (h, w) = match s.len() {
        2 => (s[0], s[1]),
        3 if s[0] == 1 => (s[1], s[2]),
        _ => return Err(GeomError::BadIntrinsics(format!("inverse depth shape {s:?}"))),
    };
    if h != k.height || w != k.width {
        return Err(GeomError::BadIntrinsics(format!(
            "inverse depth {h}x{w} does not match intrinsics {}x{}",
            k.height, k.width
        )));
    }
    Ok((h, w))
}
