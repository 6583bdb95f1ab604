use depthnet::ParamSet;

/// Learning-rate schedule: linear warm-up, then cosine decay to zero.
pub fn schedule(step: usize, total: usize, warmup: usize, base: f64) -> f64 {
    if total == 0 {
        return base;
    }
    if step < warmup {
        return base * (step + 1) as f64 / warmup as f64;
    }
    let span = (total - warmup).max(1) as f64;
    let p = (step - warmup) as f64 / span;
    base * 0.5 * (1.0 + (std::f64::consts::PI * p).cos())
}

pub enum Optimizer {
    Sgd { momentum: f32, velocity: Vec<Option<Vec<f32>>> },
    Adam { beta1: f32, beta2: f32, eps: f32, step: usize, m: Vec<Option<Vec<f32>>>, v: Vec<Option<Vec<f32>>> },
}

impl Optimizer {
    pub fn sgd(momentum: f64) -> Self {
        Optimizer::Sgd { momentum: momentum as f32, velocity: Vec::new() }
    }

    pub fn adam() -> Self {
        Optimizer::Adam { beta1: 0.9, beta2: 0.999, eps: 1e-8, step: 0, m: Vec::new(), v: Vec::new() }
    }

    pub fn from_name(name: &str, momentum: f64) -> Self {
        match name {
            "adam" => Self::adam(),
            _ => Self::sgd(momentum),
        }
    }

    /// One update over every trainable parameter. Must run after the step's
    /// tape has been dropped and before gradients are cleared.
    pub fn step(&mut self, params: &mut ParamSet<f32>, lr: f64) {
        let lr = lr as f32;
        let n = params.len();
        match self {
            Optimizer::Sgd { momentum, velocity } => {
                velocity.resize_with(n, || None);
                let mu = *momentum;
                params.update_trainable(|i, _, data, grad| {
                    let vel = velocity[i].get_or_insert_with(|| vec![0.0; data.len()]);
                    for j in 0..data.len() {
                        vel[j] = mu * vel[j] + grad[j];
                        data[j] -= lr * vel[j];
                    }
                });
            }
            Optimizer::Adam { beta1, beta2, eps, step, m, v } => {
                m.resize_with(n, || None);
                v.resize_with(n, || None);
                *step += 1;
                let t = *step as i32;
                let (b1, b2, e) = (*beta1, *beta2, *eps);
                let bc1 = 1.0 - b1.powi(t);
                let bc2 = 1.0 - b2.powi(t);
                params.update_trainable(|i, _, data, grad| {
                    let mi = m[i].get_or_insert_with(|| vec![0.0; data.len()]);
                    let vi = v[i].get_or_insert_with(|| vec![0.0; data.len()]);
                    for j in 0..data.len() {
                        mi[j] = b1 * mi[j] + (1.0 - b1) * grad[j];
                        vi[j] = b2 * vi[j] + (1.0 - b2) * grad[j] * grad[j];
                        let m_hat = mi[j] / bc1;
                        let v_hat = vi[j] / bc2;
                        data[j] -= lr * m_hat / (v_hat.sqrt() + e);
                    }
                });
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use diffcore::{Tape, Tensor};

    #[test]
    fn warmup_rises_then_cosine_decays() {
        let total = 100;
        let warmup = 5;
        assert!((schedule(0, total, warmup, 1.0) - 0.2).abs() < 1e-12);
        assert!((schedule(4, total, warmup, 1.0) - 1.0).abs() < 1e-12);
        assert!(schedule(5, total, warmup, 1.0) <= 1.0);
        let mid = schedule(warmup + 47, total, warmup, 1.0);
        assert!(mid < 1.0 && mid > 0.0);
        assert!(schedule(99, total, warmup, 1.0) < 0.01);
    }

    fn quadratic_step(opt: &mut Optimizer, ps: &mut ParamSet<f32>, lr: f64) -> f32 {
        let tape = Tape::new();
        let x = ps.by_name("x").unwrap().clone();
        let loss = tape.sum_all(&tape.mul(&x, &x).unwrap());
        let value = loss.item();
        tape.backward(&loss).unwrap();
        drop((tape, x, loss));
        opt.step(ps, lr);
        ps.zero_grads();
        value
    }

    #[test]
    fn both_optimizers_descend_a_quadratic() {
        for name in ["sgd", "adam"] {
            let mut ps = ParamSet::<f32>::new();
            ps.register("x", Tensor::param_from_vec(&[3], vec![1.0, -2.0, 0.5]).unwrap());
            let mut opt = Optimizer::from_name(name, 0.9);
            let first = quadratic_step(&mut opt, &mut ps, 0.05);
            let mut last = first;
            for _ in 0..50 {
                last = quadratic_step(&mut opt, &mut ps, 0.05);
            }
            assert!(last < first * 0.2, "{name}: {first} -> {last}");
        }
    }
}
