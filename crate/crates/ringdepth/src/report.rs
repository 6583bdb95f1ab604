use std::path::Path;

use depthnet::metrics::DepthMetrics;
use depthnet::LossBreakdown;
use serde::{Deserialize, Serialize};

use crate::RunError;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub lr: f64,
    pub depth: Option<f64>,
    pub curv: Option<f64>,
    pub rep: Option<f64>,
    pub seg: Option<f64>,
    pub total: f64,
}

impl StepRecord {
    pub fn new(step: usize, lr: f64, b: &LossBreakdown) -> Self {
        StepRecord { step, lr, depth: b.depth, curv: b.curv, rep: b.rep, seg: b.seg, total: b.total }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct MetricsRecord {
    pub abs_rel: f64,
    pub sq_rel: f64,
    pub rmse: f64,
    pub rmse_log: f64,
    pub delta1: f64,
    pub delta2: f64,
    pub delta3: f64,
    pub valid_pixels: usize,
}

impl From<DepthMetrics> for MetricsRecord {
    fn from(m: DepthMetrics) -> Self {
        MetricsRecord {
            abs_rel: m.abs_rel,
            sq_rel: m.sq_rel,
            rmse: m.rmse,
            rmse_log: m.rmse_log,
            delta1: m.delta1,
            delta2: m.delta2,
            delta3: m.delta3,
            valid_pixels: m.valid_pixels,
        }
    }
}

/// Per-camera table plus the pixel-weighted average row.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct EvalReport {
    pub per_camera: Vec<MetricsRecord>,
    pub average: MetricsRecord,
}

/// Deterministic run record: identical config and seed must produce
/// identical bytes. Wall-clock timing therefore lives in a separate
/// sidecar file, not here.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct RunReport {
    pub config_hash: String,
    pub history: Vec<StepRecord>,
    pub validation: Option<EvalReport>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunMeta {
    pub wall_clock_seconds: f64,
    pub finished_at_unix: u64,
}

impl RunReport {
    pub fn save(&self, path: &Path) -> Result<(), RunError> {
        let text = serde_json::to_string_pretty(self).map_err(|e| RunError::Config(e.to_string()))?;
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, RunError> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text).map_err(|e| RunError::Config(e.to_string()))?)
    }
}

impl RunMeta {
    pub fn save(&self, path: &Path) -> Result<(), RunError> {
        let text = serde_json::to_string_pretty(self).map_err(|e| RunError::Config(e.to_string()))?;
        std::fs::write(path, text)?;
        Ok(())
    }
}
