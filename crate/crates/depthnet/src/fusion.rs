//! Cross-camera / cross-frame attention fusion with a semantic adapter.
//!
//! Every pyramid level passes through the same machinery: resample to the
//! unified extents, add the learnable per-(frame, camera) encoding, project
//! to a reduced token width, attend clockwise across cameras and across the
//! frame pair, then normalize, feed forward, resample back and add the skip.
//! With every fusion weight at zero the block is exactly the identity.

use diffcore::{init, lit, Element, ResampleMode, RngSeed, Tape, Tensor};

use crate::config::{FusionConfig, ModuleToggles};
use crate::encoder::Conv;
use crate::params::{ParamRef, ParamSet};
use crate::Result;

pub(crate) struct Adapter {
    down: Vec<Conv>,
    up: Vec<Conv>,
}

impl Adapter {
    pub fn new<E: Element>(ps: &mut ParamSet<E>, channels: &[usize], semantic_channels: usize, seed: RngSeed) -> Self {
        let mut down = Vec::new();
        let mut up = Vec::new();
        for (l, &c) in channels.iter().enumerate() {
            let s = seed.derive("adapter").derive_index(l as u64);
            down.push(Conv::new(ps, &format!("adapter.l{l}.down"), c, semantic_channels, 1, 1, 0, s.derive("down"), true));
            up.push(Conv::new(ps, &format!("adapter.l{l}.up"), semantic_channels, c, 1, 1, 0, s.derive("up"), true));
        }
        Adapter { down, up }
    }

    /// Additive fusion at the semantic resolution; output shape = input shape.
    pub fn forward<E: Element>(
        &self,
        tape: &Tape<E>,
        ps: &ParamSet<E>,
        level: usize,
        x: &Tensor<E>,
        semantic: &Tensor<E>,
    ) -> Result<Tensor<E>> {
        let (h, w) = (x.shape()[2], x.shape()[3]);
        let (hg, wg) = (semantic.shape()[2], semantic.shape()[3]);
        let at_sem = resample_to(tape, x, hg, wg)?;
        let projected = self.down[level].forward(tape, ps, &at_sem)?;
        let fused = tape.add(&projected, semantic)?;
        let back = self.up[level].forward(tape, ps, &fused)?;
        resample_to(tape, &back, h, w)
    }
}

/// Average-pool when cleanly divisible (exact and cheap), bilinear otherwise.
fn resample_to<E: Element>(tape: &Tape<E>, x: &Tensor<E>, th: usize, tw: usize) -> Result<Tensor<E>> {
    let s = x.shape();
    let (h, w) = (s[s.len() - 2], s[s.len() - 1]);
    if h == th && w == tw {
        return Ok(x.clone());
    }
    let mode = if h >= th && w >= tw && h % th == 0 && w % tw == 0 {
        ResampleMode::AveragePool
    } else {
        ResampleMode::Bilinear
    };
    Ok(tape.resample(x, th, tw, mode)?)
}

pub(crate) struct FusionLevel {
    down_proj: Conv,
    tok_proj: Conv,
    norm_gain: ParamRef,
    norm_bias: ParamRef,
    ffn0_w: ParamRef,
    ffn0_b: ParamRef,
    ffn1_w: ParamRef,
    ffn1_b: ParamRef,
    up_proj: Conv,
}

pub(crate) struct Fusion {
    levels: Vec<FusionLevel>,
    /// Learnable per-(frame, camera) encoding, broadcast over the feature map.
    pos_enc: ParamRef,
    cfg: FusionConfig,
    frames: usize,
    cameras: usize,
}

impl Fusion {
    pub fn new<E: Element>(
        ps: &mut ParamSet<E>,
        channels: &[usize],
        cfg: FusionConfig,
        frames: usize,
        cameras: usize,
        seed: RngSeed,
    ) -> Self {
        let batch = frames * cameras;
        let pos_enc = ps.register(
            "fusion.pos_enc",
            Tensor::param_from_vec(&[batch, 1, 1, 1], vec![E::zero(); batch]).expect("pe"),
        );
        let d = cfg.proj_channels;
        let mut levels = Vec::new();
        for (l, &c) in channels.iter().enumerate() {
            let s = seed.derive("fusion").derive_index(l as u64);
            let mut rng = s.derive("mlp").rng();
            let name = format!("fusion.l{l}");
            levels.push(FusionLevel {
                down_proj: Conv::new(ps, &format!("{name}.down"), c, cfg.channels, 1, 1, 0, s.derive("down"), true),
                tok_proj: Conv::new(ps, &format!("{name}.tok"), cfg.channels, d, 1, 1, 0, s.derive("tok"), true),
                norm_gain: ps.register(
                    format!("{name}.norm.gain"),
                    Tensor::param_from_vec(&[2 * d], vec![E::one(); 2 * d]).expect("gain"),
                ),
                norm_bias: ps.register(
                    format!("{name}.norm.bias"),
                    Tensor::param_from_vec(&[2 * d], vec![E::zero(); 2 * d]).expect("bias"),
                ),
                ffn0_w: ps.register(format!("{name}.ffn0.weight"), init::uniform_fan_in(&[2 * d, cfg.ffn_hidden], 2 * d, &mut rng)),
                ffn0_b: ps.register(
                    format!("{name}.ffn0.bias"),
                    Tensor::param_from_vec(&[cfg.ffn_hidden], vec![E::zero(); cfg.ffn_hidden]).expect("b0"),
                ),
                ffn1_w: ps.register(
                    format!("{name}.ffn1.weight"),
                    init::uniform_fan_in(&[cfg.ffn_hidden, cfg.channels], cfg.ffn_hidden, &mut rng),
                ),
                ffn1_b: ps.register(
                    format!("{name}.ffn1.bias"),
                    Tensor::param_from_vec(&[cfg.channels], vec![E::zero(); cfg.channels]).expect("b1"),
                ),
                up_proj: Conv::new(ps, &format!("{name}.up"), cfg.channels, c, 1, 1, 0, s.derive("up"), true),
            });
        }
        Fusion { levels, pos_enc, cfg, frames, cameras }
    }

    /// Scaled dot-product attention where queries come from `q` and both
    /// keys and values come from `kv` (shared projection).
    fn attend<E: Element>(tape: &Tape<E>, q: &Tensor<E>, kv: &Tensor<E>, d: usize) -> Result<Tensor<E>> {
        let scores = tape.matmul(q, &tape.transpose(kv)?)?;
        let scaled = tape.scale(&scores, lit::<E>(1.0 / (d as f64).sqrt()));
        let attn = tape.softmax(&scaled, 1)?;
        Ok(tape.matmul(&attn, kv)?)
    }

    pub fn forward<E: Element>(
        &self,
        tape: &Tape<E>,
        ps: &ParamSet<E>,
        level: usize,
        x: &Tensor<E>,
        toggles: &ModuleToggles,
    ) -> Result<Tensor<E>> {
        if !toggles.spatial_attention && !toggles.temporal_attention {
            return Ok(x.clone());
        }
        let lv = &self.levels[level];
        let (g, n) = (self.frames, self.cameras);
        let b = g * n;
        let (h, w) = (x.shape()[2], x.shape()[3]);
        let (hb, wb) = (self.cfg.height, self.cfg.width);
        let d = self.cfg.proj_channels;
        let t_count = hb * wb;

        let unified = resample_to(tape, x, hb, wb)?;
        let compact = lv.down_proj.forward(tape, ps, &unified)?;
        let encoded = tape.add(&compact, ps.get(self.pos_enc))?;
        let projected = lv.tok_proj.forward(tape, ps, &encoded)?;

        // Tokens per (frame, camera): one per spatial cell, embedding = channels.
        let mut tokens = Vec::with_capacity(b);
        for bi in 0..b {
            let one = tape.narrow(&projected, 0, bi, 1)?;
            let flat = tape.reshape(&one, &[d, t_count])?;
            tokens.push(tape.transpose(&flat)?);
        }

        let mut outputs = Vec::with_capacity(b);
        for gi in 0..g {
            for ni in 0..n {
                let bi = gi * n + ni;
                let spatial = if toggles.spatial_attention {
                    let neighbor = gi * n + (ni + 1) % n;
                    Self::attend(tape, &tokens[bi], &tokens[neighbor], d)?
                } else {
                    Tensor::zeros(&[t_count, d])
                };
                let temporal = if toggles.temporal_attention {
                    let other = (1 - gi) * n + ni;
                    Self::attend(tape, &tokens[bi], &tokens[other], d)?
                } else {
                    Tensor::zeros(&[t_count, d])
                };
                let joint = tape.concat(&[&spatial, &temporal], 1)?;
                let normed = tape.layer_norm(&joint, ps.get(lv.norm_gain), ps.get(lv.norm_bias), lit(1e-5))?;
                let hidden = tape.relu(&tape.add(&tape.matmul(&normed, ps.get(lv.ffn0_w))?, ps.get(lv.ffn0_b))?);
                let out = tape.add(&tape.matmul(&hidden, ps.get(lv.ffn1_w))?, ps.get(lv.ffn1_b))?;
                let map = tape.reshape(&tape.transpose(&out)?, &[1, self.cfg.channels, hb, wb])?;
                outputs.push(map);
            }
        }
        let refs: Vec<&Tensor<E>> = outputs.iter().collect();
        let stacked = tape.concat(&refs, 0)?;
        let restored = resample_to(tape, &stacked, h, w)?;
        let contribution = lv.up_proj.forward(tape, ps, &restored)?;
        Ok(tape.add(x, &contribution)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use diffcore::RngSeed;

    fn small_fusion(ps: &mut ParamSet<f64>) -> Fusion {
        let cfg = FusionConfig { channels: 4, height: 2, width: 3, proj_channels: 3, ffn_hidden: 5 };
        Fusion::new(ps, &[4, 6], cfg, 2, 4, RngSeed(11))
    }

    #[test]
    fn output_shape_equals_input_shape() {
        let mut ps = ParamSet::<f64>::new();
        let fusion = small_fusion(&mut ps);
        let tape = Tape::new();
        let mut rng = RngSeed(1).rng();
        for (level, c, h, w) in [(0usize, 4usize, 4usize, 6usize), (1, 6, 2, 3)] {
            let x = diffcore::init::normal::<f64>(&[8, c, h, w], &mut rng);
            let y = fusion.forward(&tape, &ps, level, &x, &ModuleToggles::default()).unwrap();
            assert_eq!(y.shape(), x.shape());
        }
    }

    #[test]
    fn zeroed_weights_make_the_block_an_identity() {
        let mut ps = ParamSet::<f64>::new();
        let fusion = small_fusion(&mut ps);
        // Zero only the final projection back into the feature space.
        let up_w = ps.by_name("fusion.l0.up.weight").unwrap();
        let zeros = vec![0.0; up_w.numel()];
        ps.load_values("fusion.l0.up.weight", zeros).unwrap();
        let tape = Tape::new();
        let mut rng = RngSeed(2).rng();
        let x = diffcore::init::normal::<f64>(&[8, 4, 4, 6], &mut rng);
        let y = fusion.forward(&tape, &ps, 0, &x, &ModuleToggles::default()).unwrap();
        assert_eq!(y.data(), x.data(), "skip connection must pass the input through bit-exactly");
    }

    #[test]
    fn attention_matches_a_brute_force_oracle() {
        // Dense reference computation with explicit loops.
        let tape = Tape::<f64>::new();
        let mut rng = RngSeed(3).rng();
        let q = diffcore::init::normal::<f64>(&[6, 4], &mut rng);
        let kv = diffcore::init::normal::<f64>(&[6, 4], &mut rng);
        let got = Fusion::attend(&tape, &q, &kv, 4).unwrap();
        let (t, d) = (6, 4);
        for i in 0..t {
            let mut weights = vec![0.0f64; t];
            for j in 0..t {
                let mut dot = 0.0;
                for k in 0..d {
                    dot += q.data()[i * d + k] * kv.data()[j * d + k];
                }
                weights[j] = (dot / (d as f64).sqrt()).exp();
            }
            let z: f64 = weights.iter().sum();
            for k in 0..d {
                let mut expect = 0.0;
                for j in 0..t {
                    expect += weights[j] / z * kv.data()[j * d + k];
                }
                let gotv = got.data()[i * d + k];
                assert!((gotv - expect).abs() < 1e-6, "attention[{i},{k}]: {gotv} vs {expect}");
            }
        }
    }

    #[test]
    fn identical_keys_average_the_values_and_saturation_selects_one() {
        let tape = Tape::<f64>::new();
        // All keys identical: uniform weights, output = mean of values.
        let q = Tensor::from_vec(&[1, 2], vec![0.3, -0.7]).unwrap();
        let kv = Tensor::from_vec(&[3, 2], vec![1.0, 2.0, 1.0, 2.0, 1.0, 2.0]).unwrap();
        let out = Fusion::attend(&tape, &q, &kv, 2).unwrap();
        assert!((out.data()[0] - 1.0).abs() < 1e-9 && (out.data()[1] - 2.0).abs() < 1e-9);

        // One dominating key (dot products about +40 vs 0) selects its value.
        let q = Tensor::from_vec(&[1, 2], vec![40.0 * 2.0f64.sqrt(), 0.0]).unwrap();
        let kv = Tensor::from_vec(&[3, 2], vec![1.0, 5.0, 0.0, -3.0, 0.0, 9.0]).unwrap();
        let out = Fusion::attend(&tape, &q, &kv, 2).unwrap();
        assert!((out.data()[0] - 1.0).abs() < 1e-6 && (out.data()[1] - 5.0).abs() < 1e-6);
    }

    #[test]
    fn attention_rows_sum_to_one_and_permuting_values_permutes_outputs() {
        let tape = Tape::<f64>::new();
        let mut rng = RngSeed(9).rng();
        let q = diffcore::init::normal::<f64>(&[5, 3], &mut rng);
        let kv = diffcore::init::normal::<f64>(&[5, 3], &mut rng);
        let scores = tape.matmul(&q, &tape.transpose(&kv).unwrap()).unwrap();
        let attn = tape.softmax(&tape.scale(&scores, 1.0 / 3.0f64.sqrt()), 1).unwrap();
        for r in 0..5 {
            let s: f64 = attn.data()[r * 5..(r + 1) * 5].iter().sum();
            assert!((s - 1.0).abs() < 1e-6);
        }
        // Equivariance: permuting the key/value set leaves outputs unchanged
        // (the weights permute along with the values).
        let perm = [3usize, 0, 4, 1, 2];
        let mut kv_p = vec![0.0; 15];
        for (dst, &src) in perm.iter().enumerate() {
            kv_p[dst * 3..(dst + 1) * 3].copy_from_slice(&kv.data()[src * 3..(src + 1) * 3]);
        }
        let kv_p = Tensor::from_vec(&[5, 3], kv_p).unwrap();
        let a = Fusion::attend(&tape, &q, &kv, 3).unwrap();
        let b = Fusion::attend(&tape, &q, &kv_p, 3).unwrap();
        for (x, y) in a.data().iter().zip(b.data()) {
            assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn fusion_gradient_matches_finite_differences() {
        use diffcore::gradcheck::{finite_diff_check_multi, DEFAULT_STEP};
        let err = finite_diff_check_multi(
            |t, xs| {
                let mut ps = ParamSet::<f64>::new();
                let cfg = FusionConfig { channels: 4, height: 2, width: 3, proj_channels: 3, ffn_hidden: 5 };
                let fusion = Fusion::new(&mut ps, &[4], cfg, 2, 2, RngSeed(21));
                ps.set_tensor("fusion.l0.ffn0.weight", xs[1].clone()).unwrap();
                let y = fusion
                    .forward(t, &ps, 0, &xs[0], &ModuleToggles::default())
                    .map_err(|e| diffcore::TensorError::Invalid { op: "fusion", msg: e.to_string() })?;
                Ok(t.sum_all(&t.mul(&y, &y)?))
            },
            &[
                diffcore::init::normal::<f64>(&[4, 4, 4, 6], &mut RngSeed(22).rng()),
                diffcore::init::normal::<f64>(&[6, 5], &mut RngSeed(23).rng()),
            ],
            DEFAULT_STEP,
        )
        .unwrap();
        assert!(err <= 1e-4, "fusion fd error {err}");
    }
}
