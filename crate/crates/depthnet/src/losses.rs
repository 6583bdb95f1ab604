//! Training objectives: sparse metric-depth supervision, second-order
//! curvature alignment against a scale-ambiguous depth prior, masked
//! photometric reprojection (L1 plus SSIM) through inverse warping, and
//! frozen-feature alignment — combined with gradient-blocked scale
//! normalization onto the anchor loss.

use camgeom::warp::warp_coords;
use camgeom::Intrinsics;
use diffcore::{lit, Element, ResampleMode, Tape, Tensor};
use synthrig::{FrameSet, PixelMask, PriorDepth, SparseDepthTarget};

use crate::model::{DepthNet, Forward};
use crate::ssim::ssim_loss_map;
use crate::{ModelError, Result};

/// Loss weights and the enable switches for the ablation rows.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    /// L1 share inside the photometric term; the SSIM share is `1 - l1_mix`.
    pub l1_mix: f64,
    pub w_depth: f64,
    pub w_curv: f64,
    pub w_rep: f64,
    pub w_seg: f64,
    /// Pyramid levels the losses run on.
    pub levels: usize,
    /// Diagonal difference steps `1..=curve_steps` for the curvature term.
    pub curve_steps: usize,
    pub enable_depth: bool,
    pub enable_curv: bool,
    pub enable_rep: bool,
    pub enable_seg: bool,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            l1_mix: 0.2,
            w_depth: 0.5,
            w_curv: 0.5,
            w_rep: 3.0,
            w_seg: 3.0,
            levels: 3,
            curve_steps: 3,
            enable_depth: true,
            enable_curv: true,
            enable_rep: true,
            enable_seg: true,
        }
    }
}

/// Scalar parts of one step's objective; `total` reproduces the combination
/// from the parts and the recorded normalization factors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub depth: Option<f64>,
    pub curv: Option<f64>,
    pub rep: Option<f64>,
    pub seg: Option<f64>,
    /// Gradient-blocked scale factors applied to (curv, rep, seg).
    pub factors: [f64; 3],
    pub total: f64,
}

const FACTOR_EPS: f64 = 1e-8;

// ---------------------------------------------------------------------------
// building blocks
// ---------------------------------------------------------------------------

/// Level-`k` pyramid view of a full-size map: average pooling over dyadic
/// cells (level 0 is the map itself).
pub fn pyramid_view<E: Element>(tape: &Tape<E>, full: &Tensor<E>, k: usize) -> Result<Tensor<E>> {
    if k == 0 {
        return Ok(full.clone());
    }
    let s = full.shape();
    let (h, w) = (s[s.len() - 2], s[s.len() - 1]);
    Ok(tape.resample(full, h >> k, w >> k, ResampleMode::AveragePool)?)
}

/// Diagonal forward difference `D(y, x) - D(y + t, x + t)` on a `[H, W]`
/// map; the support shrinks by `t` on both axes.
pub fn grad_op<E: Element>(tape: &Tape<E>, map: &Tensor<E>, t: usize) -> Result<Tensor<E>> {
    let s = map.shape();
    let (h, w) = (s[0], s[1]);
    if t == 0 || t >= h || t >= w {
        return Err(diffcore::TensorError::Invalid {
            op: "grad_op",
            msg: format!("step {t} exceeds map extents {h}x{w}"),
        }
        .into());
    }
    let head = tape.narrow(&tape.narrow(map, 0, 0, h - t)?, 1, 0, w - t)?;
    let tail = tape.narrow(&tape.narrow(map, 0, t, h - t)?, 1, t, w - t)?;
    Ok(tape.sub(&head, &tail)?)
}

/// Second diagonal difference; annihilates affine maps exactly.
pub fn curvature<E: Element>(tape: &Tape<E>, map: &Tensor<E>, t: usize) -> Result<Tensor<E>> {
    let g = grad_op(tape, map, t)?;
    grad_op(tape, &g, t)
}

fn mask_tensor<E: Element>(mask: &[bool], h: usize, w: usize) -> Tensor<E> {
    let data: Vec<E> = mask.iter().map(|&b| if b { E::one() } else { E::zero() }).collect();
    Tensor::from_vec(&[h, w], data).expect("mask extents")
}

/// 3x3 all-valid erosion with mirrored borders, matching the SSIM window.
fn erode3(mask: &[bool], h: usize, w: usize) -> Vec<bool> {
    let mirror = |i: isize, n: usize| -> usize {
        if n == 1 {
            return 0;
        }
        let mut i = i;
        if i < 0 {
            i = -i;
        }
        if i >= n as isize {
            i = 2 * (n as isize - 1) - i;
        }
        i.clamp(0, n as isize - 1) as usize
    };
    let mut out = vec![false; h * w];
    for y in 0..h {
        for x in 0..w {
            let mut all = true;
            'win: for dy in -1isize..=1 {
                for dx in -1isize..=1 {
                    if !mask[mirror(y as isize + dy, h) * w + mirror(x as isize + dx, w)] {
                        all = false;
                        break 'win;
                    }
                }
            }
            out[y * w + x] = all;
        }
    }
    out
}


// ---------------------------------------------------------------------------
// sparse metric-depth supervision
// ---------------------------------------------------------------------------

/// Per-level cell target: samples landing in the same level-`k` cell are
/// averaged; the mask marks cells owning at least one sample.
fn sparse_cells(target: &SparseDepthTarget, k: usize) -> (Vec<f64>, Vec<bool>, usize, usize) {
    let (h, w) = (target.height >> k, target.width >> k);
    let mut sum = vec![0.0f64; h * w];
    let mut count = vec![0u32; h * w];
    for s in &target.samples {
        let i = (s.y >> k) * w + (s.x >> k);
        sum[i] += s.inv_depth as f64;
        count[i] += 1;
    }
    let mask: Vec<bool> = count.iter().map(|&c| c > 0).collect();
    for i in 0..h * w {
        if count[i] > 0 {
            sum[i] /= count[i] as f64;
        }
    }
    (sum, mask, h, w)
}

/// Mean absolute inverse-depth residual over the valid samples of every
/// image, summed over the pyramid levels and scaled by `1 / d_max`.
/// A batch without a single valid sample is an explicit signal, not zero.
pub fn sparse_depth_loss<E: Element>(
    tape: &Tape<E>,
    pyramids: &[Vec<Tensor<E>>],
    targets: &[&SparseDepthTarget],
    d_max: f64,
    levels: usize,
) -> Result<Tensor<E>> {
    assert_eq!(pyramids.len(), targets.len());
    let mut total = Tensor::scalar(E::zero());
    let mut any = false;
    for k in 0..levels {
        let mut lvl_sum = Tensor::scalar(E::zero());
        let mut lvl_count = 0usize;
        for (pyr, target) in pyramids.iter().zip(targets) {
            let (cells, mask, h, w) = sparse_cells(target, k);
            let n_cells = mask.iter().filter(|&&m| m).count();
            if n_cells == 0 {
                continue;
            }
            let target_t = Tensor::from_vec(&[h, w], cells.iter().map(|&v| lit::<E>(v)).collect())?;
            let mask_t = mask_tensor::<E>(&mask, h, w);
            let pred = tape.reshape(&pyr[k], &[h, w])?;
            let resid = tape.mul(&tape.abs(&tape.sub(&pred, &target_t)?), &mask_t)?;
            lvl_sum = tape.add(&lvl_sum, &tape.sum_all(&resid))?;
            lvl_count += n_cells;
        }
        if lvl_count > 0 {
            any = true;
            total = tape.add(&total, &tape.scale(&lvl_sum, lit::<E>(1.0 / lvl_count as f64)))?;
        }
    }
    if !any {
        return Err(ModelError::UnsupervisedBatch("no valid sparse depth samples"));
    }
    Ok(tape.scale(&total, lit::<E>(1.0 / d_max)))
}

// ---------------------------------------------------------------------------
// curvature alignment with the depth prior
// ---------------------------------------------------------------------------

/// Mean absolute difference between prediction curvature and prior
/// curvature, summed over levels and diagonal steps, averaged over images.
/// The prior branch carries no gradient.
pub fn curvature_loss<E: Element>(
    tape: &Tape<E>,
    pyramids: &[Vec<Tensor<E>>],
    priors: &[&PriorDepth],
    levels: usize,
    steps: usize,
) -> Result<Tensor<E>> {
    assert_eq!(pyramids.len(), priors.len());
    let mut total = Tensor::scalar(E::zero());
    for (pyr, prior) in pyramids.iter().zip(priors) {
        let full: Tensor<E> =
            Tensor::from_vec(&[prior.height, prior.width], prior.data.iter().map(|&v| lit::<E>(v as f64)).collect())?;
        for k in 0..levels {
            let p_k = pyramid_view(tape, &full, k)?;
            let d_k = tape.reshape(&pyr[k], p_k.shape())?;
            for t in 1..=steps {
                let c_pred = curvature(tape, &d_k, t)?;
                let c_prior = curvature(tape, &p_k, t)?;
                let term = tape.mean_all(&tape.abs(&tape.sub(&c_pred, &c_prior)?));
                total = tape.add(&total, &term)?;
            }
        }
    }
    Ok(tape.scale(&total, lit::<E>(1.0 / pyramids.len() as f64)))
}

// ---------------------------------------------------------------------------
// view synthesis
// ---------------------------------------------------------------------------

/// One synthesized target view: the source image sampled at correspondences
/// induced by the target's level-`k` inverse depth and the target-to-source
/// motion, compared at full resolution.
pub struct SynthesizedView<E: Element> {
    pub warped: Tensor<E>,
    /// Per-pixel validity: in-frustum, in-bounds, supervision masks on both
    /// frames (the source mask is warped along).
    pub valid: Vec<bool>,
    pub valid_count: usize,
}

/// Occlusion test slack: the projected point may sit this far behind the
/// surface the source sees (relative plus absolute, meters) before the
/// correspondence is declared occluded.
const OCCLUSION_REL: f64 = 0.08;
const OCCLUSION_ABS: f64 = 0.25;

/// Inverse warping for camera `n` at pyramid level `k`.
///
/// The level-`k` inverse depth (a pyramid view of the full map) is smooth;
/// it is bilinearly restored to full resolution and the warp runs entirely
/// at level-0 extents, so the photometric comparison always happens at full
/// resolution and no cross-level pixel convention enters. The level index
/// only controls how much the depth is smoothed.
///
/// Validity intersects: in-frustum/in-bounds, both supervision masks (the
/// source mask warped along), and a gradient-free geometric consistency
/// test that drops correspondences landing significantly behind the surface
/// the source frame itself sees — the occlusion boundaries.
#[allow(clippy::too_many_arguments)]
pub fn reproject<E: Element>(
    tape: &Tape<E>,
    src_image: &Tensor<E>,
    inv_depth_src_full: &Tensor<E>,
    inv_depth_tgt_full: &Tensor<E>,
    k: usize,
    intrinsics: &Intrinsics,
    tgt_to_src: &Tensor<E>,
    tgt_mask: &PixelMask,
    src_mask: &PixelMask,
) -> Result<SynthesizedView<E>> {
    let (h, w) = (intrinsics.height, intrinsics.width);
    let d = if k == 0 {
        tape.reshape(inv_depth_tgt_full, &[h, w])?
    } else {
        let d_k = pyramid_view(tape, inv_depth_tgt_full, k)?;
        tape.reshape(&tape.resample(&d_k, h, w, ResampleMode::Bilinear)?, &[h, w])?
    };
    let grid = warp_coords(tape, &d, intrinsics, intrinsics, tgt_to_src)?;
    let (warped, sample_valid) = tape.grid_sample(src_image, &grid.coords)?;

    // Warp the source supervision mask with the same grid, gradient-free.
    let src_mask_img = tape.reshape(&mask_tensor::<E>(&src_mask.data, h, w), &[1, h, w])?;
    let (warped_mask, _) = tape.grid_sample(&src_mask_img, &grid.coords.detach())?;
    let wm = warped_mask.data();
    let half = lit::<E>(0.5);

    // Source depth at the correspondences, gradient-free.
    let src_inv_img = tape.reshape(&inv_depth_src_full.detach(), &[1, h, w])?;
    let (src_inv_at, _) = tape.grid_sample(&src_inv_img, &grid.coords.detach())?;
    let si = src_inv_at.data();
    let zp = grid.depth.data();

    let mut valid = vec![false; h * w];
    let mut valid_count = 0usize;
    for i in 0..h * w {
        let z_proj = zp[i].to_f64().unwrap();
        let z_seen = 1.0 / si[i].to_f64().unwrap().max(1e-6);
        let visible = z_proj <= z_seen * (1.0 + OCCLUSION_REL) + OCCLUSION_ABS;
        let ok = grid.valid[i] && sample_valid[i] && tgt_mask.data[i] && wm[i] > half && visible;
        valid[i] = ok;
        valid_count += ok as usize;
    }
    Ok(SynthesizedView { warped, valid, valid_count })
}

/// Photometric objective: per (level, camera), `l1_mix` of the masked mean
/// absolute error plus `1 - l1_mix` of the masked mean `(1 - SSIM) / 2`
/// over fully-valid windows, averaged over the (level, camera) terms so the
/// magnitude does not scale with the rig size.
pub fn reprojection_loss<E: Element>(
    tape: &Tape<E>,
    views: &[Vec<SynthesizedView<E>>],
    tgt_images: &[Tensor<E>],
    l1_mix: f64,
) -> Result<Tensor<E>> {
    let mut total = Tensor::scalar(E::zero());
    let mut n_terms = 0usize;
    for (n, per_level) in views.iter().enumerate() {
        let tgt = &tgt_images[n];
        let (h, w) = (tgt.shape()[1], tgt.shape()[2]);
        for view in per_level {
            if view.valid_count == 0 {
                continue;
            }
            n_terms += 1;
            let mask = mask_tensor::<E>(&view.valid, h, w);
            let diff = tape.abs(&tape.sub(&view.warped, tgt)?);
            let l1_map = tape.scale(&tape.sum_axis(&diff, 0)?, lit::<E>(1.0 / 3.0));
            let l1 = tape.scale(&tape.sum_all(&tape.mul(&l1_map, &mask)?), lit::<E>(1.0 / view.valid_count as f64));

            let eroded = erode3(&view.valid, h, w);
            let n_windows = eroded.iter().filter(|&&b| b).count();
            let term = if n_windows > 0 {
                let ssim = ssim_loss_map(tape, &view.warped, tgt)?;
                let ssim_pix = tape.scale(&tape.sum_axis(&ssim, 0)?, lit::<E>(1.0 / 3.0));
                let wmask = mask_tensor::<E>(&eroded, h, w);
                let ssim_mean =
                    tape.scale(&tape.sum_all(&tape.mul(&ssim_pix, &wmask)?), lit::<E>(1.0 / n_windows as f64));
                tape.add(&tape.scale(&l1, lit(l1_mix)), &tape.scale(&ssim_mean, lit(1.0 - l1_mix)))?
            } else {
                tape.scale(&l1, lit(l1_mix))
            };
            total = tape.add(&total, &term)?;
        }
    }
    if n_terms == 0 {
        return Err(ModelError::UnsupervisedBatch("no valid pixels for reprojection"));
    }
    Ok(tape.scale(&total, lit::<E>(1.0 / n_terms as f64)))
}

/// Frozen-feature alignment: masked target and masked synthesis through the
/// frozen extractor, mean absolute feature discrepancy, summed over cameras
/// and levels. Gradient flows through the warp only.
pub fn semantic_loss<E: Element>(
    tape: &Tape<E>,
    net: &DepthNet<E>,
    views: &[Vec<SynthesizedView<E>>],
    tgt_images: &[Tensor<E>],
) -> Result<Tensor<E>> {
    let mut total = Tensor::scalar(E::zero());
    let mut terms = 0usize;
    for (n, per_level) in views.iter().enumerate() {
        let tgt = &tgt_images[n];
        let (h, w) = (tgt.shape()[1], tgt.shape()[2]);
        for view in per_level {
            if view.valid_count == 0 {
                continue;
            }
            let mask = tape.reshape(&mask_tensor::<E>(&view.valid, h, w), &[1, h, w])?;
            let masked_tgt = tape.reshape(&tape.mul(tgt, &mask)?, &[1, 3, h, w])?;
            let masked_syn = tape.reshape(&tape.mul(&view.warped, &mask)?, &[1, 3, h, w])?;
            let f_tgt = net.semantic_features(tape, &masked_tgt.detach())?;
            let f_syn = net.semantic_features(tape, &masked_syn)?;
            total = tape.add(&total, &tape.mean_all(&tape.abs(&tape.sub(&f_syn, &f_tgt)?)))?;
            terms += 1;
        }
    }
    if terms == 0 {
        return Err(ModelError::UnsupervisedBatch("no valid pixels for semantic alignment"));
    }
    Ok(tape.scale(&total, lit::<E>(1.0 / terms as f64)))
}

// ---------------------------------------------------------------------------
// combination
// ---------------------------------------------------------------------------

pub struct LossParts<E: Element> {
    pub depth: Option<Tensor<E>>,
    pub curv: Option<Tensor<E>>,
    pub rep: Option<Tensor<E>>,
    pub seg: Option<Tensor<E>>,
}

/// Scale-normalized total: every non-anchor term is rescaled by
/// `|anchor| / |term|` with both magnitudes taken as gradient-blocked
/// constants recomputed each step, then weighted. The anchor is the depth
/// loss when present, otherwise the photometric loss.
pub fn total_loss<E: Element>(
    tape: &Tape<E>,
    parts: &LossParts<E>,
    weights: &LossWeights,
) -> Result<(Tensor<E>, LossBreakdown)> {
    let val = |t: &Option<Tensor<E>>, name: &'static str| -> Result<Option<f64>> {
        match t {
            None => Ok(None),
            Some(t) => {
                let v = t.item().to_f64().unwrap();
                if !v.is_finite() {
                    return Err(ModelError::NonFiniteLoss { part: name, value: v });
                }
                Ok(Some(v))
            }
        }
    };
    let d = val(&parts.depth, "depth")?;
    let c = val(&parts.curv, "curvature")?;
    let r = val(&parts.rep, "reprojection")?;
    let s = val(&parts.seg, "semantic")?;

    let (anchor_val, anchor_is_depth) = match (d, r) {
        (Some(v), _) => (v.abs(), true),
        (None, Some(v)) => (v.abs(), false),
        (None, None) => return Err(ModelError::UnsupervisedBatch("no anchor loss enabled")),
    };
    let factor = |v: Option<f64>| -> f64 {
        match v {
            Some(x) => anchor_val / x.abs().max(FACTOR_EPS),
            None => 0.0,
        }
    };
    let f_curv = factor(c);
    let f_rep = if anchor_is_depth { factor(r) } else { 1.0 };
    let f_seg = factor(s);

    let mut total = Tensor::scalar(E::zero());
    if let Some(t) = &parts.depth {
        total = tape.add(&total, &tape.scale(t, lit(weights.w_depth)))?;
    }
    if let Some(t) = &parts.curv {
        total = tape.add(&total, &tape.scale(t, lit(weights.w_curv * f_curv)))?;
    }
    if let Some(t) = &parts.rep {
        total = tape.add(&total, &tape.scale(t, lit(weights.w_rep * f_rep)))?;
    }
    if let Some(t) = &parts.seg {
        total = tape.add(&total, &tape.scale(t, lit(weights.w_seg * f_seg)))?;
    }
    let breakdown = LossBreakdown {
        depth: d,
        curv: c,
        rep: r,
        seg: s,
        factors: [f_curv, f_rep, f_seg],
        total: total.item().to_f64().unwrap(),
    };
    if !breakdown.total.is_finite() {
        return Err(ModelError::NonFiniteLoss { part: "total", value: breakdown.total });
    }
    Ok((total, breakdown))
}

impl LossBreakdown {
    /// Recombines the stored parts and factors; must reproduce `total`.
    pub fn recombine(&self, weights: &LossWeights) -> f64 {
        let mut t = 0.0;
        if let Some(d) = self.depth {
            t += weights.w_depth * d;
        }
        if let Some(c) = self.curv {
            t += weights.w_curv * self.factors[0] * c;
        }
        if let Some(r) = self.rep {
            t += weights.w_rep * self.factors[1] * r;
        }
        if let Some(s) = self.seg {
            t += weights.w_seg * self.factors[2] * s;
        }
        t
    }
}

// ---------------------------------------------------------------------------
// frameset-level glue
// ---------------------------------------------------------------------------

/// All images of a frameset as one `[G*N, 3, H, W]` constant tensor.
pub fn frameset_images<E: Element>(fs: &FrameSet) -> Result<Tensor<E>> {
    let g = fs.frames();
    let n = fs.cameras();
    let (h, w) = (fs.views[0][0].height, fs.views[0][0].width);
    let mut data = Vec::with_capacity(g * n * 3 * h * w);
    for frame in &fs.views {
        for view in frame {
            data.extend(view.rgb.iter().map(|&v| lit::<E>(v as f64)));
        }
    }
    Ok(Tensor::from_vec(&[g * n, 3, fs.views[0][0].height, w], data)?)
}

/// One image of a frameset as a `[3, H, W]` constant tensor.
pub fn image_tensor<E: Element>(fs: &FrameSet, g: usize, n: usize) -> Result<Tensor<E>> {
    let view = &fs.views[g][n];
    let data: Vec<E> = view.rgb.iter().map(|&v| lit::<E>(v as f64)).collect();
    Ok(Tensor::from_vec(&[3, view.height, view.width], data)?)
}

/// Computes every enabled loss for one frameset and combines them.
pub fn compute_losses<E: Element>(
    tape: &Tape<E>,
    net: &DepthNet<E>,
    fs: &FrameSet,
    fwd: &Forward<E>,
    weights: &LossWeights,
) -> Result<(Tensor<E>, LossBreakdown)> {
    let g = fs.frames();
    let n_cams = fs.cameras();
    let batch = g * n_cams;

    // Per-image pyramids of the predicted inverse depth.
    let mut pyramids: Vec<Vec<Tensor<E>>> = Vec::with_capacity(batch);
    for b in 0..batch {
        let full = fwd.inv_depth_of(tape, b)?;
        let mut levels = Vec::with_capacity(weights.levels);
        for k in 0..weights.levels {
            levels.push(pyramid_view(tape, &full, k)?);
        }
        pyramids.push(levels);
    }

    let depth = if weights.enable_depth {
        let targets: Vec<&SparseDepthTarget> = (0..batch).map(|b| &fs.sparse[b / n_cams][b % n_cams]).collect();
        Some(sparse_depth_loss(tape, &pyramids, &targets, fs.d_max, weights.levels)?)
    } else {
        None
    };

    let curv = if weights.enable_curv {
        let priors: Vec<&PriorDepth> = (0..batch).map(|b| &fs.prior[b / n_cams][b % n_cams]).collect();
        Some(curvature_loss(tape, &pyramids, &priors, weights.levels, weights.curve_steps)?)
    } else {
        None
    };

    let (rep, seg) = if weights.enable_rep || weights.enable_seg {
        let motions = net.camera_motions(tape, &fwd.pose, &fs.rig, true)?;
        let mut views: Vec<Vec<SynthesizedView<E>>> = Vec::with_capacity(n_cams);
        let mut tgt_images = Vec::with_capacity(n_cams);
        for n in 0..n_cams {
            let src_image = image_tensor::<E>(fs, 0, n)?;
            let src_full = fwd.inv_depth_of(tape, n)?;
            let tgt_full = fwd.inv_depth_of(tape, n_cams + n)?;
            let tgt_mask = fs.supervision_mask(1, n);
            let src_mask = fs.supervision_mask(0, n);
            let mut per_level = Vec::with_capacity(weights.levels);
            for k in 0..weights.levels {
                per_level.push(reproject(
                    tape,
                    &src_image,
                    &src_full,
                    &tgt_full,
                    k,
                    &fs.rig.camera(n).intrinsics,
                    &motions[n],
                    &tgt_mask,
                    &src_mask,
                )?);
            }
            views.push(per_level);
            tgt_images.push(image_tensor::<E>(fs, 1, n)?);
        }
        let rep = if weights.enable_rep {
            Some(reprojection_loss(tape, &views, &tgt_images, weights.l1_mix)?)
        } else {
            None
        };
        let seg = if weights.enable_seg {
            Some(semantic_loss(tape, net, &views, &tgt_images)?)
        } else {
            None
        };
        (rep, seg)
    } else {
        (None, None)
    };

    total_loss(tape, &LossParts { depth, curv, rep, seg }, weights)
}
