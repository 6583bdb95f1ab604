//! Warp-path verification: closed-form cases, agreement between the tensor
//! and f64 implementations, and finite-difference gradients.

use camgeom::warp::{
    backproject, per_camera_pose_tensor, project, rigid_to_tensor, se3_exp_tensor, warp_coords, warp_coords_ref,
};
use camgeom::{per_camera_pose, se3_exp, Intrinsics, Pose6, RigidTransform};
use diffcore::gradcheck::{finite_diff_check_multi, DEFAULT_STEP};
use diffcore::{RngSeed, Tape, Tensor};
use nalgebra::Vector3;

fn test_intrinsics() -> Intrinsics {
    Intrinsics::new(40.0, 42.0, 11.5, 7.5, 24, 16).unwrap()
}

fn constant_inv_depth(k: &Intrinsics, d: f64) -> Tensor<f64> {
    Tensor::full(&[k.height, k.width], 1.0 / d)
}

#[test]
fn identity_pose_gives_identity_grid() {
    let k = test_intrinsics();
    let tape = Tape::<f64>::new();
    let d = constant_inv_depth(&k, 5.0);
    let pose = rigid_to_tensor::<f64>(&RigidTransform::identity());
    let grid = warp_coords(&tape, &d, &k, &k, &pose).unwrap();
    let (coords, valid) = (grid.coords, grid.valid);
    assert!(valid.iter().all(|&v| v));
    let cd = coords.data();
    for y in 0..k.height {
        for x in 0..k.width {
            let i = (y * k.width + x) * 2;
            assert!((cd[i] - x as f64).abs() < 1e-9, "x at ({x},{y}): {}", cd[i]);
            assert!((cd[i + 1] - y as f64).abs() < 1e-9);
        }
    }
}

#[test]
fn forward_translation_magnifies_about_the_principal_point() {
    let k = test_intrinsics();
    let tape = Tape::<f64>::new();
    let depth = 8.0;
    let tz = 2.0;
    // Camera moves forward by tz: scene points move back by tz in-camera.
    let pose = rigid_to_tensor::<f64>(&se3_exp(&Pose6::new(Vector3::zeros(), Vector3::new(0.0, 0.0, -tz))));
    let d = constant_inv_depth(&k, depth);
    let coords = warp_coords(&tape, &d, &k, &k, &pose).unwrap().coords;
    let m = depth / (depth - tz);
    let cd = coords.data();
    for y in 0..k.height {
        for x in 0..k.width {
            let i = (y * k.width + x) * 2;
            let expect_x = k.cx + m * (x as f64 - k.cx);
            let expect_y = k.cy + m * (y as f64 - k.cy);
            assert!((cd[i] - expect_x).abs() < 1e-9, "magnification x: {} vs {expect_x}", cd[i]);
            assert!((cd[i + 1] - expect_y).abs() < 1e-9);
        }
    }
}

#[test]
fn translation_through_the_plane_invalidates_everything() {
    let k = test_intrinsics();
    let tape = Tape::<f64>::new();
    let depth = 6.0;
    let pose = rigid_to_tensor::<f64>(&se3_exp(&Pose6::new(Vector3::zeros(), Vector3::new(0.0, 0.0, -2.0 * depth))));
    let d = constant_inv_depth(&k, depth);
    let valid = warp_coords(&tape, &d, &k, &k, &pose).unwrap().valid;
    assert!(valid.iter().all(|&v| !v), "points behind the camera must be invalid");
}

#[test]
fn tensor_warp_agrees_with_reference() {
    let k_src = test_intrinsics();
    let k_tgt = Intrinsics::new(38.0, 39.0, 10.5, 8.5, 22, 18).unwrap();
    let mut rng = RngSeed(404).rng();
    use rand::Rng;
    let inv: Vec<f64> = (0..k_src.width * k_src.height).map(|_| rng.gen_range(0.05..0.5)).collect();
    let pose = se3_exp(&Pose6::new(
        Vector3::new(0.02, -0.03, 0.01),
        Vector3::new(0.2, -0.1, 0.4),
    ));
    let (ref_coords, ref_valid) = warp_coords_ref(&inv, &k_src, &k_tgt, &pose).unwrap();
    let tape = Tape::<f64>::new();
    let d = Tensor::from_vec(&[k_src.height, k_src.width], inv).unwrap();
    let grid = warp_coords(&tape, &d, &k_src, &k_tgt, &rigid_to_tensor::<f64>(&pose)).unwrap();
    let (coords, valid) = (grid.coords, grid.valid);
    let cd = coords.data();
    for i in 0..ref_coords.len() {
        assert!((cd[i * 2] - ref_coords[i].0).abs() < 1e-9);
        assert!((cd[i * 2 + 1] - ref_coords[i].1).abs() < 1e-9);
        assert_eq!(valid[i], ref_valid[i]);
    }
}

#[test]
fn backproject_principal_pixel_lands_on_the_axis() {
    let k = Intrinsics::new(40.0, 42.0, 11.0, 7.0, 24, 16).unwrap();
    let tape = Tape::<f64>::new();
    let mut inv = vec![0.25; 24 * 16];
    inv[7 * 24 + 11] = 0.5;
    let d = Tensor::from_vec(&[16, 24], inv).unwrap();
    let pts = backproject(&tape, &d, &k).unwrap();
    let idx = 7 * 24 + 11;
    let n = 24 * 16;
    let (x, y, z) = (pts.data()[idx], pts.data()[n + idx], pts.data()[2 * n + idx]);
    assert!(x.abs() < 1e-12 && y.abs() < 1e-12 && (z - 2.0).abs() < 1e-12, "({x},{y},{z})");
}

#[test]
fn backproject_rejects_nonpositive_inverse_depth() {
    let k = test_intrinsics();
    let tape = Tape::<f64>::new();
    let mut inv = vec![0.25; k.width * k.height];
    inv[3] = 0.0;
    let d = Tensor::from_vec(&[k.height, k.width], inv).unwrap();
    assert!(backproject(&tape, &d, &k).is_err());
}

#[test]
fn constant_inverse_depth_backprojects_to_a_plane() {
    let k = test_intrinsics();
    let tape = Tape::<f64>::new();
    let pts = backproject(&tape, &constant_inv_depth(&k, 7.0), &k).unwrap();
    let n = k.width * k.height;
    for i in 0..n {
        assert!((pts.data()[2 * n + i] - 7.0).abs() < 1e-12);
    }
}

#[test]
fn project_backproject_round_trips_the_pixel_grid() {
    let k = test_intrinsics();
    let tape = Tape::<f64>::new();
    let mut rng = RngSeed(7).rng();
    use rand::Rng;
    let inv: Vec<f64> = (0..k.width * k.height).map(|_| rng.gen_range(0.02..1.0)).collect();
    let d = Tensor::from_vec(&[k.height, k.width], inv).unwrap();
    let pts = backproject(&tape, &d, &k).unwrap();
    let (coords, in_front) = project(&tape, &pts, &k).unwrap();
    assert!(in_front.iter().all(|&v| v));
    let cd = coords.data();
    for y in 0..k.height {
        for x in 0..k.width {
            let i = (y * k.width + x) * 2;
            assert!((cd[i] - x as f64).abs() <= 1e-6 && (cd[i + 1] - y as f64).abs() <= 1e-6);
        }
    }
}

#[test]
fn projection_is_scale_invariant_and_flags_behind_camera() {
    let k = test_intrinsics();
    let tape = Tape::<f64>::new();
    let pts = Tensor::from_vec(&[3, 2], vec![0.5, 0.5, -0.2, -0.2, 2.0, -1.0]).unwrap();
    let (c1, front) = project(&tape, &pts, &k).unwrap();
    assert_eq!(front, vec![true, false]);
    let scaled = tape.scale(&pts, 3.0);
    let (c2, _) = project(&tape, &scaled, &k).unwrap();
    assert!((c1.data()[0] - c2.data()[0]).abs() < 1e-9);
    assert!((c1.data()[1] - c2.data()[1]).abs() < 1e-9);
}

#[test]
fn tensor_exponential_matches_the_reference() {
    for (aa, t) in [
        (Vector3::new(0.0, 0.0, 0.0), Vector3::new(0.1, -0.2, 0.3)),
        (Vector3::new(1e-9, 0.0, 0.0), Vector3::new(0.0, 0.0, 1.0)),
        (Vector3::new(0.3, -0.5, 0.2), Vector3::new(1.0, 2.0, -0.5)),
        (Vector3::new(0.0, 2.8, 0.0), Vector3::new(-0.3, 0.4, 0.1)),
    ] {
        let p = Pose6::new(aa, t);
        let expect = se3_exp(&p).to_row_major();
        let tape = Tape::<f64>::new();
        let pt = Tensor::from_vec(&[6], p.to_array().to_vec()).unwrap();
        let got = se3_exp_tensor(&tape, &pt).unwrap();
        for (g, e) in got.data().iter().zip(expect.iter()) {
            assert!((g - e).abs() < 1e-12, "exp mismatch: {g} vs {e}");
        }
    }
}

#[test]
fn tensor_conjugation_matches_the_reference() {
    let e = se3_exp(&Pose6::new(Vector3::new(0.0, 1.3, 0.0), Vector3::new(0.5, 0.0, 0.4)));
    let p = se3_exp(&Pose6::new(Vector3::new(0.05, -0.02, 0.01), Vector3::new(0.0, 0.0, 0.6)));
    let expect = per_camera_pose(&p, &e).to_row_major();
    let tape = Tape::<f64>::new();
    let got = per_camera_pose_tensor(&tape, &rigid_to_tensor::<f64>(&p), &e).unwrap();
    for (g, ex) in got.data().iter().zip(expect.iter()) {
        assert!((g - ex).abs() < 1e-12);
    }
}

#[test]
fn warp_gradients_match_finite_differences() {
    let k = Intrinsics::new(20.0, 21.0, 5.5, 3.5, 12, 8).unwrap();
    let mut rng = RngSeed(1234).rng();
    use rand::Rng;
    let inv: Vec<f64> = (0..12 * 8).map(|_| rng.gen_range(0.1..0.4)).collect();
    let inv = Tensor::from_vec(&[8, 12], inv).unwrap();
    let pose6 = Tensor::from_vec(&[6], vec![0.03, -0.02, 0.04, 0.2, -0.1, 0.3]).unwrap();
    let err = finite_diff_check_multi(
        |t, xs| {
            let m = se3_exp_tensor(t, &xs[1]).map_err(geom_to_tensor)?;
            let grid = warp_coords(t, &xs[0], &k, &k, &m).map_err(geom_to_tensor)?;
            Ok(t.mean_all(&t.mul(&grid.coords, &grid.coords)?))
        },
        &[inv, pose6],
        DEFAULT_STEP,
    )
    .unwrap();
    assert!(err <= 1e-5, "warp fd error {err}");
}

fn geom_to_tensor(e: camgeom::GeomError) -> diffcore::TensorError {
    match e {
        camgeom::GeomError::Tensor(t) => t,
        other => diffcore::TensorError::Invalid { op: "geom", msg: other.to_string() },
    }
}
