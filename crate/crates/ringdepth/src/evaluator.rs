use std::path::Path;

use depthnet::losses::frameset_images;
use depthnet::metrics::{self, DepthMetrics};
use depthnet::DepthNet;
use diffcore::Tape;
use synthrig::FrameSet;

use crate::report::{EvalReport, MetricsRecord};
use crate::RunError;

/// Predicted metric depth maps for one frameset, indexed `[frame][camera]`.
pub type PredictedDepths = Vec<Vec<Vec<f64>>>;

/// Runs the network over one frameset and converts inverse depth to metric
/// depth maps.
pub fn predict(net: &DepthNet<f32>, fs: &FrameSet) -> Result<PredictedDepths, RunError> {
    let tape = Tape::inference();
    let images = frameset_images::<f32>(fs).map_err(|e| RunError::Data(e.to_string()))?;
    let fwd = net.forward(&tape, &images).map_err(|e| RunError::Data(e.to_string()))?;
    let (g, n) = (fs.frames(), fs.cameras());
    let hw = net.cfg.height * net.cfg.width;
    let inv = fwd.inv_depth.data();
    let mut out = Vec::with_capacity(g);
    for gi in 0..g {
        let mut frame = Vec::with_capacity(n);
        for ni in 0..n {
            let b = gi * n + ni;
            frame.push(inv[b * hw..(b + 1) * hw].iter().map(|&v| 1.0 / v as f64).collect());
        }
        out.push(frame);
    }
    Ok(out)
}

/// Per-camera metric table plus the pixel-weighted average, pooling every
/// frame of every frameset. `predict_fn` supplies the depth maps, so ground
/// truth can be injected directly in tests.
pub fn evaluate_with(
    framesets: &[FrameSet],
    d_min: f64,
    d_max: f64,
    mut predict_fn: impl FnMut(&FrameSet) -> Result<PredictedDepths, RunError>,
) -> Result<EvalReport, RunError> {
    let cams = framesets[0].cameras();
    let mut pred_per_cam: Vec<Vec<f64>> = vec![Vec::new(); cams];
    let mut gt_per_cam: Vec<Vec<f64>> = vec![Vec::new(); cams];
    for fs in framesets {
        let preds = predict_fn(fs)?;
        for g in 0..fs.frames() {
            for n in 0..cams {
                pred_per_cam[n].extend_from_slice(&preds[g][n]);
                gt_per_cam[n].extend(fs.views[g][n].depth.iter());
            }
        }
    }
    let per_camera: Vec<DepthMetrics> = (0..cams)
        .map(|n| metrics::compute(&pred_per_cam[n], &gt_per_cam[n], d_min, d_max))
        .collect::<Result<_, _>>()
        .map_err(|e| RunError::Data(e.to_string()))?;
    let average = DepthMetrics::weighted_average(&per_camera).ok_or(RunError::Data("no valid pixels".into()))?;
    Ok(EvalReport {
        per_camera: per_camera.into_iter().map(MetricsRecord::from).collect(),
        average: average.into(),
    })
}

pub fn evaluate(net: &DepthNet<f32>, framesets: &[FrameSet]) -> Result<EvalReport, RunError> {
    evaluate_with(framesets, net.cfg.d_min, net.cfg.d_max, |fs| predict(net, fs))
}

/// Writes visual artifacts for one frameset: predicted depth files,
/// grayscale inverse-depth maps, and relative-error maps colored on a
/// linear ramp over [0, 0.5].
pub fn write_artifacts(
    net: &DepthNet<f32>,
    fs: &FrameSet,
    preds: &PredictedDepths,
    dir: &Path,
) -> Result<(), RunError> {
    std::fs::create_dir_all(dir)?;
    let (h, w) = (net.cfg.height, net.cfg.width);
    let (lo, hi) = (1.0 / net.cfg.d_max, 1.0 / net.cfg.d_min);
    for (g, frame) in preds.iter().enumerate() {
        for (n, depth) in frame.iter().enumerate() {
            let stem = format!("frame{g}_cam{n}");
            let as_f32: Vec<f32> = depth.iter().map(|&v| v as f32).collect();
            synthrig::write_float_map(&dir.join(format!("{stem}_pred.depth")), w, h, &as_f32)
                .map_err(|e| RunError::Data(e.to_string()))?;

            // Inverse-depth visualization, near = bright.
            let mut gray = vec![0.0f32; 3 * w * h];
            for i in 0..w * h {
                let v = (((1.0 / depth[i]) - lo) / (hi - lo)).clamp(0.0, 1.0) as f32;
                for c in 0..3 {
                    gray[c * w * h + i] = v;
                }
            }
            synthrig::write_ppm(&dir.join(format!("{stem}_pred.ppm")), w, h, &gray)
                .map_err(|e| RunError::Data(e.to_string()))?;

            // Relative-error map against ground truth where it exists.
            let mut err = vec![0.0f32; 3 * w * h];
            for i in 0..w * h {
                let gt = fs.views[g][n].depth[i];
                let (r, g_, b) = if gt.is_finite() {
                    let rel = ((depth[i] - gt).abs() / gt).clamp(0.0, 0.5) / 0.5;
                    (rel as f32, (1.0 - rel as f32) * 0.8, 0.2)
                } else {
                    (0.0, 0.0, 0.0)
                };
                err[i] = r;
                err[w * h + i] = g_;
                err[2 * w * h + i] = b;
            }
            synthrig::write_ppm(&dir.join(format!("{stem}_err.ppm")), w, h, &err)
                .map_err(|e| RunError::Data(e.to_string()))?;
        }
    }
    Ok(())
}
