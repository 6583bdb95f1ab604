//! Standard depth-evaluation metrics over metric (not inverse) depth.

use crate::{ModelError, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DepthMetrics {
    pub abs_rel: f64,
    pub sq_rel: f64,
    pub rmse: f64,
    pub rmse_log: f64,
    pub delta1: f64,
    pub delta2: f64,
    pub delta3: f64,
    pub valid_pixels: usize,
}

/// Compares predicted depth against ground truth, restricted to pixels whose
/// ground truth is finite and inside `[d_min, d_max]`. Predictions are
/// clamped into the same range. Threshold counts use strict `<`, so
/// boundary ties fail deterministically.
pub fn compute(pred_depth: &[f64], gt_depth: &[f64], d_min: f64, d_max: f64) -> Result<DepthMetrics> {
    assert_eq!(pred_depth.len(), gt_depth.len());
    let mut n = 0usize;
    let (mut abs_rel, mut sq_rel, mut se, mut se_log) = (0.0f64, 0.0, 0.0, 0.0);
    let (mut d1, mut d2, mut d3) = (0usize, 0usize, 0usize);
    for (&p, &g) in pred_depth.iter().zip(gt_depth) {
        if !g.is_finite() || g < d_min || g > d_max {
            continue;
        }
        let p = p.clamp(d_min, d_max);
        n += 1;
        let diff = g - p;
        abs_rel += diff.abs() / g;
        sq_rel += diff * diff / g;
        se += diff * diff;
        let dl = g.ln() - p.ln();
        se_log += dl * dl;
        let ratio = (g / p).max(p / g);
        if ratio < 1.25 {
            d1 += 1;
        }
        if ratio < 1.25 * 1.25 {
            d2 += 1;
        }
        if ratio < 1.25 * 1.25 * 1.25 {
            d3 += 1;
        }
    }
    if n == 0 {
        return Err(ModelError::NoValidPixels);
    }
    let nf = n as f64;
    Ok(DepthMetrics {
        abs_rel: abs_rel / nf,
        sq_rel: sq_rel / nf,
        rmse: (se / nf).sqrt(),
        rmse_log: (se_log / nf).sqrt(),
        delta1: d1 as f64 / nf,
        delta2: d2 as f64 / nf,
        delta3: d3 as f64 / nf,
        valid_pixels: n,
    })
}

impl DepthMetrics {
    /// Pixel-count-weighted average across cameras.
    pub fn weighted_average(parts: &[DepthMetrics]) -> Option<DepthMetrics> {
        let total: usize = parts.iter().map(|m| m.valid_pixels).sum();
        if total == 0 {
            return None;
        }
        let w = |f: fn(&DepthMetrics) -> f64| -> f64 {
            parts.iter().map(|m| f(m) * m.valid_pixels as f64).sum::<f64>() / total as f64
        };
        Some(DepthMetrics {
            abs_rel: w(|m| m.abs_rel),
            sq_rel: w(|m| m.sq_rel),
            rmse: w(|m| m.rmse),
            rmse_log: w(|m| m.rmse_log),
            delta1: w(|m| m.delta1),
            delta2: w(|m| m.delta2),
            delta3: w(|m| m.delta3),
            valid_pixels: total,
        })
    }
}
