use diffcore::{init, Element, RngSeed, Tape, Tensor};

use crate::params::{ParamRef, ParamSet};
use crate::Result;

/// Convolution layer: weights plus broadcast bias, registered by name.
pub(crate) struct Conv {
    pub w: ParamRef,
    pub b: ParamRef,
    pub stride: usize,
    pub pad: usize,
    cout: usize,
}

impl Conv {
    pub fn new<E: Element>(
        ps: &mut ParamSet<E>,
        name: &str,
        cin: usize,
        cout: usize,
        k: usize,
        stride: usize,
        pad: usize,
        seed: RngSeed,
        trainable: bool,
    ) -> Self {
        let mut rng = seed.rng();
        let w = init::uniform_fan_in::<E>(&[cout, cin, k, k], cin * k * k, &mut rng);
        let w = if trainable { w } else { w.detach() };
        let bias = if trainable {
            Tensor::param_from_vec(&[cout], vec![E::zero(); cout]).expect("bias")
        } else {
            Tensor::from_vec(&[cout], vec![E::zero(); cout]).expect("bias")
        };
        Conv {
            w: ps.register(format!("{name}.weight"), w),
            b: ps.register(format!("{name}.bias"), bias),
            stride,
            pad,
            cout,
        }
    }

    pub fn forward<E: Element>(&self, tape: &Tape<E>, ps: &ParamSet<E>, x: &Tensor<E>) -> Result<Tensor<E>> {
        let y = tape.conv2d(x, ps.get(self.w), self.stride, self.pad)?;
        let bias = tape.reshape(ps.get(self.b), &[self.cout, 1, 1])?;
        Ok(tape.add(&y, &bias)?)
    }
}

/// Visual feature pyramid: one strided convolution per level, halving the
/// spatial extents each time.
pub(crate) struct Encoder {
    convs: Vec<Conv>,
}

impl Encoder {
    pub fn new<E: Element>(ps: &mut ParamSet<E>, channels: &[usize], seed: RngSeed) -> Self {
        let mut convs = Vec::with_capacity(channels.len());
        let mut cin = 3;
        for (l, &cout) in channels.iter().enumerate() {
            convs.push(Conv::new(
                ps,
                &format!("encoder.l{l}"),
                cin,
                cout,
                3,
                2,
                1,
                seed.derive("encoder").derive_index(l as u64),
                true,
            ));
            cin = cout;
        }
        Encoder { convs }
    }

    pub fn forward<E: Element>(&self, tape: &Tape<E>, ps: &ParamSet<E>, images: &Tensor<E>) -> Result<Vec<Tensor<E>>> {
        let mut levels = Vec::with_capacity(self.convs.len());
        let mut x = images.clone();
        for conv in &self.convs {
            x = tape.relu(&conv.forward(tape, ps, &x)?);
            levels.push(x.clone());
        }
        Ok(levels)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ModelConfig;

    #[test]
    fn pyramid_shapes_follow_dyadic_halving() {
        let cfg = ModelConfig::default();
        let mut ps = ParamSet::<f32>::new();
        let enc = Encoder::new(&mut ps, &cfg.encoder_channels, RngSeed(1));
        let tape = Tape::new();
        let images = Tensor::zeros(&[2, 3, 64, 96]);
        let levels = enc.forward(&tape, &ps, &images).unwrap();
        let expect = [(16, 32, 48), (32, 16, 24), (64, 8, 12), (128, 4, 6)];
        for (lvl, (c, h, w)) in levels.iter().zip(expect) {
            assert_eq!(lvl.shape(), &[2, c, h, w]);
        }
    }

    #[test]
    fn zero_input_with_zero_bias_gives_zero_features() {
        let mut ps = ParamSet::<f32>::new();
        let enc = Encoder::new(&mut ps, &[8, 16], RngSeed(2));
        let tape = Tape::new();
        let images = Tensor::zeros(&[1, 3, 16, 16]);
        let levels = enc.forward(&tape, &ps, &images).unwrap();
        for lvl in levels {
            assert!(lvl.data().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn gradient_reaches_the_convolution_weights() {
        use diffcore::gradcheck::{finite_diff_check_multi, DEFAULT_STEP};
        // Spot check on a small input: d(sum of level-1 features)/d(weights).
        let mut ps = ParamSet::<f64>::new();
        let enc = Encoder::new(&mut ps, &[4, 8], RngSeed(3));
        let mut rng = RngSeed(4).rng();
        let images = diffcore::init::normal::<f64>(&[1, 3, 8, 12], &mut rng).detach();
        let w0 = ps.by_name("encoder.l0.weight").unwrap().detach();
        let err = finite_diff_check_multi(
            |t, xs| {
                let mut inner = ParamSet::<f64>::new();
                let e = Encoder::new(&mut inner, &[4, 8], RngSeed(3));
                inner.set_tensor("encoder.l0.weight", xs[0].clone()).unwrap();
                let levels = e.forward(t, &inner, &images).map_err(|err| diffcore::TensorError::Invalid {
                    op: "encoder",
                    msg: err.to_string(),
                })?;
                Ok(t.sum_all(&t.mul(&levels[1], &levels[1])?))
            },
            &[w0],
            DEFAULT_STEP,
        )
        .unwrap();
        assert!(err <= 1e-5, "encoder weight gradient fd error {err}");
    }
}
