use std::path::{Path, PathBuf};
use std::time::Instant;

use depthnet::losses::{compute_losses, frameset_images};
use depthnet::{checkpoint, DepthNet};
use diffcore::{RngSeed, Tape};

use crate::data::{epoch_order, generate, TrainData};
use crate::optim::{schedule, Optimizer};
use crate::report::{RunMeta, RunReport, StepRecord};
use crate::{evaluator, ExperimentConfig, RunError};

pub struct TrainOutcome {
    pub net: DepthNet<f32>,
    pub report: RunReport,
    pub checkpoint: PathBuf,
}

/// Deterministic training:seeded data, seeded initialization, sequential
/// steps, in-place updates between tapes. Identical config and seed give a
/// bit-identical checkpoint and report.
pub fn train(cfg: &ExperimentConfig, out_dir: &Path) -> Result<TrainOutcome, RunError> {
    cfg.validate()?;
    std::fs::create_dir_all(out_dir)?;
    cfg.save(&out_dir.join("config.toml"))?;
    let started = Instant::now();

    let data = generate(cfg)?;
    train_on(cfg, data, out_dir, started)
}

pub fn train_on(
    cfg: &ExperimentConfig,
    data: TrainData,
    out_dir: &Path,
    started: Instant,
) -> Result<TrainOutcome, RunError> {
    let mut net = DepthNet::<f32>::new(cfg.model_config(), RngSeed(cfg.seed).derive("model"))
        .map_err(|e| RunError::Config(e.to_string()))?;
    let weights = cfg.loss_weights();
    let mut opt = Optimizer::from_name(&cfg.optimizer, cfg.momentum);
    let warmup = cfg.warmup_steps();

    checkpoint::save(&net.params, &out_dir.join("model_init.ckpt")).map_err(|e| RunError::Data(e.to_string()))?;

    // Image tensors are reused across steps; framesets are constant.
    let images: Vec<diffcore::Tensor<f32>> = data
        .train
        .iter()
        .map(|fs| frameset_images::<f32>(fs).map_err(|e| RunError::Data(e.to_string())))
        .collect::<Result<_, _>>()?;

    let mut history = Vec::with_capacity(cfg.total_steps);
    let scenes = data.train.len();
    let mut order = Vec::new();
    for step in 0..cfg.total_steps {
        if step % scenes == 0 {
            order = epoch_order(cfg.seed, step / scenes, scenes);
        }
        let idx = order[step % scenes];
        let fs = &data.train[idx];
        let lr = schedule(step, cfg.total_steps, warmup, cfg.learning_rate);

        let breakdown = {
            let tape = Tape::new();
            let fwd = net.forward(&tape, &images[idx]).map_err(|e| RunError::Data(e.to_string()))?;
            let (total, breakdown) = compute_losses(&tape, &net, fs, &fwd, &weights)
                .map_err(|e| RunError::Numerical(format!("step {step}: {e}")))?;
            if !breakdown.total.is_finite() {
                return Err(RunError::Numerical(format!("step {step}: non-finite loss {breakdown:?}")));
            }
            tape.backward(&total).map_err(|e| RunError::Numerical(format!("step {step}: {e}")))?;
            breakdown
        };
        opt.step(&mut net.params, lr);
        net.params.zero_grads();
        history.push(StepRecord::new(step, lr, &breakdown));

        if step % 100 == 0 {
            eprintln!(
                "step {step:5}  lr {lr:.2e}  total {:.4}  depth {:?}  rep {:?}",
                breakdown.total,
                breakdown.depth.map(|v| (v * 1e4).round() / 1e4),
                breakdown.rep.map(|v| (v * 1e4).round() / 1e4)
            );
        }
        if cfg.checkpoint_every > 0 && step > 0 && step % cfg.checkpoint_every == 0 {
            checkpoint::save(&net.params, &out_dir.join(format!("model_{step:06}.ckpt")))
                .map_err(|e| RunError::Data(e.to_string()))?;
        }
    }

    let ckpt_path = out_dir.join("model.ckpt");
    checkpoint::save(&net.params, &ckpt_path).map_err(|e| RunError::Data(e.to_string()))?;

    let validation = Some(evaluator::evaluate(&net, &data.val)?);
    let report = RunReport { config_hash: cfg.hash(), history, validation };
    report.save(&out_dir.join("report.json"))?;
    RunMeta {
        wall_clock_seconds: started.elapsed().as_secs_f64(),
        finished_at_unix: std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
    }
    .save(&out_dir.join("run_meta.json"))?;

    Ok(TrainOutcome { net, report, checkpoint: ckpt_path })
}

/// Median of the last tenth of the loss history against the first tenth;
/// training trends are asserted statistically, never per step.
pub fn loss_trend(history: &[StepRecord]) -> Option<(f64, f64)> {
    if history.len() < 20 {
        return None;
    }
    let tenth = history.len() / 10;
    let median = |xs: &[StepRecord]| -> f64 {
        let mut v: Vec<f64> = xs.iter().map(|r| r.total).collect();
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        v[v.len() / 2]
    };
    Some((median(&history[..tenth]), median(&history[history.len() - tenth..])))
}
