//! Finite-difference verification of analytic gradients.
//!
//! Runs in f64 only; central differences in f32 drown in rounding noise.

use crate::{Result, Tape, Tensor, TensorError};

pub const DEFAULT_STEP: f64 = 1e-5;
/// Relative error uses `max(|analytic|, |numeric|, ABS_FLOOR)` as denominator.
pub const ABS_FLOOR: f64 = 1e-8;

/// Max relative error between the analytic gradient of `f` at `x0` and
/// central finite differences with step `step`, over every input listed.
///
/// `f` must evaluate to a scalar and be re-runnable (a fresh tape is created
/// per evaluation).
pub fn finite_diff_check_multi<F>(f: F, inputs: &[Tensor<f64>], step: f64) -> Result<f64>
where
    F: Fn(&Tape<f64>, &[Tensor<f64>]) -> Result<Tensor<f64>>,
{
    let tape = Tape::new();
    let params: Vec<Tensor<f64>> = inputs
        .iter()
        .map(|t| Tensor::param_from_vec(t.shape(), t.data().to_vec()).expect("valid input"))
        .collect();
    let loss = f(&tape, &params)?;
    if loss.numel() != 1 {
        return Err(TensorError::NonScalarLoss { shape: loss.shape().to_vec() });
    }
    if !loss.item().is_finite() {
        return Err(TensorError::NonFiniteInput { op: "finite_diff_check" });
    }
    tape.backward(&loss)?;
    let analytic: Vec<Vec<f64>> = params
        .iter()
        .map(|p| p.grad_vec().unwrap_or_else(|| vec![0.0; p.numel()]))
        .collect();

    let eval = |probe: &[Tensor<f64>]| -> Result<f64> {
        let t = Tape::inference();
        let out = f(&t, probe)?;
        let v = out.item();
        if !v.is_finite() {
            return Err(TensorError::NonFiniteInput { op: "finite_diff_check" });
        }
        Ok(v)
    };

    let mut max_rel = 0.0f64;
    for (pi, p) in params.iter().enumerate() {
        let base = p.data().to_vec();
        for i in 0..base.len() {
            // Representable step: h rounded through the actual perturbed value.
            let h = {
                let hi = base[i] + step;
                hi - base[i]
            };
            let mut probe: Vec<Tensor<f64>> = params.iter().map(|t| t.detach()).collect();
            let mut plus = base.clone();
            plus[i] += h;
            probe[pi] = Tensor::from_vec(p.shape(), plus)?;
            let fp = eval(&probe)?;
            let mut minus = base.clone();
            minus[i] -= h;
            probe[pi] = Tensor::from_vec(p.shape(), minus)?;
            let fm = eval(&probe)?;
            let numeric = (fp - fm) / (2.0 * h);
            let a = analytic[pi][i];
            let denom = a.abs().max(numeric.abs()).max(ABS_FLOOR);
            let rel = (a - numeric).abs() / denom;
            if rel > max_rel {
                max_rel = rel;
            }
        }
    }
    Ok(max_rel)
}

/// Single-input convenience wrapper.
pub fn finite_diff_check<F>(f: F, x0: &Tensor<f64>, step: f64) -> Result<f64>
where
    F: Fn(&Tape<f64>, &Tensor<f64>) -> Result<Tensor<f64>>,
{
    finite_diff_check_multi(|tape, xs| f(tape, &xs[0]), std::slice::from_ref(x0), step)
}

/// Named finite-difference case for the primitive sweep.
pub struct SweepCase {
    pub name: &'static str,
    pub max_rel_err: f64,
}

/// Check every registered primitive against finite differences with seeded
/// random inputs. Returns one entry per primitive.
pub fn primitive_sweep(seed: crate::RngSeed) -> Result<Vec<SweepCase>> {
    use crate::init::normal;
    use crate::ResampleMode;

    let mut rng = seed.rng();
    let mut out = Vec::new();
    let mut push = |name: &'static str, err: Result<f64>| -> Result<()> {
        out.push(SweepCase { name, max_rel_err: err? });
        Ok(())
    };

    let a34 = normal::<f64>(&[3, 4], &mut rng);
    let b34 = normal::<f64>(&[3, 4], &mut rng);
    let b42 = normal::<f64>(&[4, 2], &mut rng);
    let v5 = normal::<f64>(&[5], &mut rng);
    let pos34 = {
        let d: Vec<f64> = a34.data().iter().map(|v| v.abs() + 0.5).collect();
        Tensor::from_vec(&[3, 4], d).unwrap()
    };

    push("add", finite_diff_check_multi(|t, x| t.sum_all(&t.add(&x[0], &x[1])?).pipe_ok(), &[a34.clone(), b34.clone()], DEFAULT_STEP))?;
    push("add_broadcast", finite_diff_check_multi(
        |t, x| {
            let s = t.add(&x[0], &x[1])?;
            Ok(t.sum_all(&t.mul(&s, &s)?))
        },
        &[a34.clone(), normal::<f64>(&[4], &mut rng)],
        DEFAULT_STEP,
    ))?;
    push("sub", finite_diff_check_multi(|t, x| {
        let s = t.sub(&x[0], &x[1])?;
        Ok(t.sum_all(&t.mul(&s, &s)?))
    }, &[a34.clone(), b34.clone()], DEFAULT_STEP))?;
    push("mul", finite_diff_check_multi(|t, x| t.sum_all(&t.mul(&x[0], &x[1])?).pipe_ok(), &[a34.clone(), b34.clone()], DEFAULT_STEP))?;
    push("div", finite_diff_check_multi(|t, x| t.sum_all(&t.div(&x[0], &x[1])?).pipe_ok(), &[a34.clone(), pos34.clone()], DEFAULT_STEP))?;
    push("neg", finite_diff_check(|t, x| Ok(t.sum_all(&t.mul(&t.neg(x), &t.neg(x))?)), &a34, DEFAULT_STEP))?;
    push("relu", finite_diff_check(|t, x| Ok(t.sum_all(&t.relu(x))), &a34, DEFAULT_STEP))?;
    push("abs", finite_diff_check(|t, x| Ok(t.sum_all(&t.abs(x))), &pos34, DEFAULT_STEP))?;
    push("sigmoid", finite_diff_check(|t, x| Ok(t.sum_all(&t.sigmoid(x))), &a34, DEFAULT_STEP))?;
    push("exp", finite_diff_check(|t, x| Ok(t.sum_all(&t.exp(x))), &a34, DEFAULT_STEP))?;
    push("ln", finite_diff_check(|t, x| Ok(t.sum_all(&t.ln(x))), &pos34, DEFAULT_STEP))?;
    push("sqrt", finite_diff_check(|t, x| Ok(t.sum_all(&t.sqrt(x))), &pos34, DEFAULT_STEP))?;
    push("sin", finite_diff_check(|t, x| Ok(t.sum_all(&t.sin(x))), &a34, DEFAULT_STEP))?;
    push("cos", finite_diff_check(|t, x| Ok(t.sum_all(&t.cos(x))), &a34, DEFAULT_STEP))?;
    push("recip", finite_diff_check(|t, x| Ok(t.sum_all(&t.recip(x))), &pos34, DEFAULT_STEP))?;
    push("scale", finite_diff_check(|t, x| Ok(t.sum_all(&t.scale(x, 2.5))), &a34, DEFAULT_STEP))?;
    push("matmul", finite_diff_check_multi(|t, x| t.sum_all(&t.matmul(&x[0], &x[1])?).pipe_ok(), &[a34.clone(), b42.clone()], DEFAULT_STEP))?;
    push("reshape", finite_diff_check(|t, x| {
        let r = t.reshape(x, &[4, 3])?;
        Ok(t.sum_all(&t.mul(&r, &r)?))
    }, &a34, DEFAULT_STEP))?;
    push("permute", finite_diff_check(|t, x| {
        let r = t.permute(x, &[1, 0])?;
        Ok(t.sum_all(&t.mul(&r, &r)?))
    }, &a34, DEFAULT_STEP))?;
    push("narrow", finite_diff_check(|t, x| {
        let r = t.narrow(x, 1, 1, 2)?;
        Ok(t.sum_all(&t.mul(&r, &r)?))
    }, &a34, DEFAULT_STEP))?;
    push("concat", finite_diff_check_multi(|t, x| {
        let r = t.concat(&[&x[0], &x[1]], 0)?;
        Ok(t.sum_all(&t.mul(&r, &r)?))
    }, &[a34.clone(), b34.clone()], DEFAULT_STEP))?;
    push("softmax", finite_diff_check(|t, x| {
        let s = t.softmax(x, 0)?;
        Ok(t.sum_all(&t.mul(&s, &s)?))
    }, &v5, DEFAULT_STEP))?;
    push("layer_norm", finite_diff_check_multi(
        |t, x| {
            let y = t.layer_norm(&x[0], &x[1], &x[2], 1e-5)?;
            Ok(t.sum_all(&t.mul(&y, &y)?))
        },
        &[a34.clone(), normal::<f64>(&[4], &mut rng), normal::<f64>(&[4], &mut rng)],
        DEFAULT_STEP,
    ))?;
    push("sum_axis", finite_diff_check(|t, x| {
        let s = t.sum_axis(x, 1)?;
        Ok(t.sum_all(&t.mul(&s, &s)?))
    }, &a34, DEFAULT_STEP))?;
    push("conv2d", finite_diff_check_multi(
        |t, x| {
            let y = t.conv2d(&x[0], &x[1], 2, 1)?;
            Ok(t.sum_all(&t.mul(&y, &y)?))
        },
        &[normal::<f64>(&[1, 2, 6, 7], &mut rng), normal::<f64>(&[3, 2, 3, 3], &mut rng)],
        DEFAULT_STEP,
    ))?;
    push("resample_bilinear", finite_diff_check(|t, x| {
        let y = t.resample(x, 5, 9, ResampleMode::Bilinear)?;
        Ok(t.sum_all(&t.mul(&y, &y)?))
    }, &normal::<f64>(&[2, 3, 6], &mut rng), DEFAULT_STEP))?;
    push("resample_avgpool", finite_diff_check(|t, x| {
        let y = t.resample(x, 2, 3, ResampleMode::AveragePool)?;
        Ok(t.sum_all(&t.mul(&y, &y)?))
    }, &normal::<f64>(&[2, 4, 6], &mut rng), DEFAULT_STEP))?;
    push("resample_nearest", finite_diff_check(|t, x| {
        let y = t.resample(x, 8, 12, ResampleMode::Nearest)?;
        Ok(t.sum_all(&t.mul(&y, &y)?))
    }, &normal::<f64>(&[2, 4, 6], &mut rng), DEFAULT_STEP))?;
    // Interior coordinates, away from the floor() kinks.
    let gs_img = normal::<f64>(&[2, 5, 6], &mut rng);
    let gs_coords = {
        let mut rng2 = seed.derive("gs_coords").rng();
        let xs = crate::init::normal::<f64>(&[3, 4, 2], &mut rng2);
        let d: Vec<f64> = xs
            .data()
            .iter()
            .enumerate()
            .map(|(i, v)| {
                let frac = (v.abs() * 7.3).fract() * 0.5 + 0.2; // in (0.2, 0.7)
                if i % 2 == 0 {
                    1.0 + (i as f64 % 3.0) + frac
                } else {
                    1.0 + ((i / 2) as f64 % 2.0) + frac
                }
            })
            .collect();
        Tensor::from_vec(&[3, 4, 2], d).unwrap()
    };
    push("grid_sample", finite_diff_check_multi(
        |t, x| {
            let (y, _valid) = t.grid_sample(&x[0], &x[1])?;
            Ok(t.sum_all(&t.mul(&y, &y)?))
        },
        &[gs_img, gs_coords],
        DEFAULT_STEP,
    ))?;
    push("box3_reflect", finite_diff_check(|t, x| {
        let y = t.box3_reflect(x)?;
        Ok(t.sum_all(&t.mul(&y, &y)?))
    }, &normal::<f64>(&[2, 4, 5], &mut rng), DEFAULT_STEP))?;

    Ok(out)
}

trait PipeOk: Sized {
    fn pipe_ok(self) -> Result<Self> {
        Ok(self)
    }
}
impl<E: crate::Element> PipeOk for Tensor<E> {}
