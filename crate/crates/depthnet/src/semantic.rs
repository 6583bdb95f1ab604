use diffcore::{Element, RngSeed, Tape, Tensor};

use crate::encoder::Conv;
use crate::params::ParamSet;
use crate::Result;

/// Frozen stand-in for a pretrained semantic feature extractor: a seeded
/// three-layer strided convolution stack. Its parameters never require
/// gradient, so nothing can train through it, but gradients still flow
/// through its *activations* when the input depends on trainable state
/// (the warped-image alignment loss relies on exactly that).
pub(crate) struct SemanticEncoder {
    convs: Vec<Conv>,
}

impl SemanticEncoder {
    pub fn new<E: Element>(ps: &mut ParamSet<E>, channels: usize, seed: RngSeed) -> Self {
        let widths = [16, channels, channels];
        let mut convs = Vec::new();
        let mut cin = 3;
        for (i, &cout) in widths.iter().enumerate() {
            convs.push(Conv::new(
                ps,
                &format!("semantic.l{i}"),
                cin,
                cout,
                3,
                2,
                1,
                seed.derive("semantic").derive_index(i as u64),
                false,
            ));
            cin = cout;
        }
        SemanticEncoder { convs }
    }

    /// `[B,3,H,W]` -> `[B,C_g,H/8,W/8]`.
    pub fn forward<E: Element>(&self, tape: &Tape<E>, ps: &ParamSet<E>, images: &Tensor<E>) -> Result<Tensor<E>> {
        let mut x = images.clone();
        for conv in &self.convs {
            x = tape.relu(&conv.forward(tape, ps, &x)?);
        }
        Ok(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn output_extents_are_one_eighth() {
        let mut ps = ParamSet::<f32>::new();
        let enc = SemanticEncoder::new(&mut ps, 32, RngSeed(5));
        let tape = Tape::new();
        let x = Tensor::zeros(&[3, 3, 32, 48]);
        let y = enc.forward(&tape, &ps, &x).unwrap();
        assert_eq!(y.shape(), &[3, 32, 4, 6]);
    }

    #[test]
    fn extractor_parameters_never_require_grad() {
        let mut ps = ParamSet::<f32>::new();
        let _ = SemanticEncoder::new(&mut ps, 32, RngSeed(5));
        for (name, t) in ps.iter() {
            assert!(!t.requires_grad(), "{name} must be frozen");
        }
    }

    #[test]
    fn gradient_flows_through_activations_but_not_weights() {
        let mut ps = ParamSet::<f64>::new();
        let enc = SemanticEncoder::new(&mut ps, 8, RngSeed(6));
        let tape = Tape::new();
        let mut rng = RngSeed(7).rng();
        let x = diffcore::init::normal::<f64>(&[1, 3, 16, 16], &mut rng);
        let y = enc.forward(&tape, &ps, &x).unwrap();
        let loss = tape.sum_all(&tape.mul(&y, &y).unwrap());
        tape.backward(&loss).unwrap();
        assert!(x.grad_vec().is_some(), "input must receive gradient");
        for (name, t) in ps.iter() {
            assert!(t.grad_vec().is_none(), "{name} accumulated gradient despite being frozen");
        }
    }
}
