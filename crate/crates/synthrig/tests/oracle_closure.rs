//! Closure of the synthetic oracle: warping the source frame into the target
//! with exact depth and motion must reproduce the target photometrically, and
//! the warp grid must agree with the renderer's analytic correspondences.

use diffcore::RngSeed;
use synthrig::frameset_from_seed;

#[test]
fn ground_truth_warp_reproduces_the_target_photometrically() {
    let mut total = synthrig::verify::ClosureStats::default();
    for seed in 0..10u64 {
        let fs = frameset_from_seed(RngSeed(1000 + seed), 96, 64, 0.02).unwrap();
        total.merge(&synthrig::verify::closure_stats(&fs).unwrap());
    }
    println!(
        "photometric closure: {:.2}% of {} valid pixels within 0.01",
        total.l1_fraction() * 100.0,
        total.valid
    );
    assert!(total.l1_fraction() >= 0.95, "only {:.2}% of valid pixels closed", total.l1_fraction() * 100.0);
}

#[test]
fn warp_grid_matches_analytic_correspondences() {
    let mut total = synthrig::verify::ClosureStats::default();
    for seed in 0..10u64 {
        let fs = frameset_from_seed(RngSeed(2000 + seed), 96, 64, 0.02).unwrap();
        total.merge(&synthrig::verify::closure_stats(&fs).unwrap());
    }
    println!(
        "correspondences: {:.3}% of {} within 0.05 px (worst {:.4})",
        total.px_fraction() * 100.0,
        total.compared,
        total.worst_px
    );
    assert!(total.px_fraction() >= 0.99, "only {:.3}% within 0.05 px", total.px_fraction() * 100.0);
}

#[test]
fn dataset_round_trip_is_bit_exact() {
    let fs = frameset_from_seed(RngSeed(31337), 48, 32, 0.03).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().join("frameset_0000");
    synthrig::save_frameset(&d, &fs).unwrap();
    let loaded = synthrig::load_frameset(&d).unwrap();
    for g in 0..2 {
        for n in 0..fs.cameras() {
            assert_eq!(fs.views[g][n].rgb, loaded.views[g][n].rgb, "images must round-trip bit-exactly");
            let a: Vec<f32> = fs.views[g][n].depth_f32();
            let b: Vec<f32> = loaded.views[g][n].depth_f32();
            assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
            assert_eq!(fs.sparse[g][n].samples, loaded.sparse[g][n].samples);
            assert_eq!(fs.prior[g][n].data, loaded.prior[g][n].data);
        }
    }
    assert_eq!(fs.pose_src_to_tgt.to_row_major(), loaded.pose_src_to_tgt.to_row_major());

    // Write-out of the reloaded set reproduces identical bytes.
    let d2 = dir.path().join("frameset_copy");
    synthrig::save_frameset(&d2, &loaded).unwrap();
    for entry in std::fs::read_dir(&d).unwrap() {
        let name = entry.unwrap().file_name();
        let x = std::fs::read(d.join(&name)).unwrap();
        let y = std::fs::read(d2.join(&name)).unwrap();
        assert_eq!(x, y, "{name:?} differs after round trip");
    }
}

#[test]
fn images_stay_in_unit_range_after_round_trip() {
    let fs = frameset_from_seed(RngSeed(9), 48, 32, 0.02).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().join("fs");
    synthrig::save_frameset(&d, &fs).unwrap();
    let loaded = synthrig::load_frameset(&d).unwrap();
    for g in 0..2 {
        for n in 0..fs.cameras() {
            assert!(loaded.views[g][n].rgb.iter().all(|&v| (0.0..=1.0).contains(&v)));
        }
    }
}
