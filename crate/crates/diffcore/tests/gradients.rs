//! Finite-difference verification of every primitive plus composite graphs,
//! linearity of the backward pass, and bit-exact determinism.

use diffcore::gradcheck::{finite_diff_check, finite_diff_check_multi, primitive_sweep, DEFAULT_STEP};
use diffcore::init::normal;
use diffcore::{lit, Element, ResampleMode, RngSeed, Tape, Tensor};

#[test]
fn every_primitive_passes_finite_difference_check() {
    let cases = primitive_sweep(RngSeed(2024)).unwrap();
    assert!(cases.len() >= 25, "sweep should cover the full primitive set");
    for case in &cases {
        println!("gradcheck {:<24} max rel err {:.3e}", case.name, case.max_rel_err);
        assert!(case.max_rel_err <= 1e-4, "{} failed: {}", case.name, case.max_rel_err);
    }
}

#[test]
fn finite_diff_of_sum_is_exact() {
    let mut rng = RngSeed(40).rng();
    let x = normal::<f64>(&[3, 3], &mut rng);
    let err = finite_diff_check(|t, x| Ok(t.sum_all(x)), &x, DEFAULT_STEP).unwrap();
    assert!(err <= 1e-10, "sum fd error {err}");
}

#[test]
fn softmax_sum_is_constant_with_vanishing_gradient() {
    let mut rng = RngSeed(41).rng();
    let x = normal::<f64>(&[6], &mut rng);
    let tape = Tape::new();
    let p = Tensor::param_from_vec(x.shape(), x.data().to_vec()).unwrap();
    let y = tape.softmax(&p, 0).unwrap();
    let loss = tape.sum_all(&y);
    tape.backward(&loss).unwrap();
    for g in p.grad_vec().unwrap() {
        assert!(g.abs() <= 1e-8, "gradient of a constant function: {g}");
    }
}

fn composite_a(t: &Tape<f64>, xs: &[Tensor<f64>]) -> diffcore::Result<Tensor<f64>> {
    // conv -> relu -> layer_norm -> matmul -> sum
    let y = t.conv2d(&xs[0], &xs[1], 1, 1)?;
    let y = t.relu(&y);
    let flat = t.reshape(&y, &[2 * 4, 16])?;
    let y = t.layer_norm(&flat, &xs[2], &xs[3], 1e-5)?;
    let y = t.matmul(&y, &xs[4])?;
    Ok(t.sum_all(&y))
}

fn composite_b(t: &Tape<f64>, xs: &[Tensor<f64>]) -> diffcore::Result<Tensor<f64>> {
    // resample -> grid_sample -> hadamard -> softmax -> weighted sum
    let img = t.resample(&xs[0], 5, 6, ResampleMode::Bilinear)?;
    let (smp, _) = t.grid_sample(&img, &xs[1])?;
    let m = t.mul(&smp, &xs[2])?;
    let flat = t.reshape(&m, &[2, 3])?;
    let s = t.softmax(&flat, 1)?;
    Ok(t.sum_all(&t.mul(&s, &flat)?))
}

fn composite_c(t: &Tape<f64>, xs: &[Tensor<f64>]) -> diffcore::Result<Tensor<f64>> {
    // two-branch graph with a shared input: sigmoid/exp paths rejoined by div
    let a = t.sigmoid(&xs[0]);
    let b = t.exp(&t.scale(&xs[0], -0.5));
    let c = t.div(&a, &t.add_scalar(&b, 1.0))?;
    let d = t.concat(&[&c, &t.sqrt(&t.abs(&xs[0]))], 0)?;
    Ok(t.mean_all(&t.mul(&d, &d)?))
}

#[test]
fn composite_graphs_match_finite_differences() {
    let mut rng = RngSeed(77).rng();
    let run = |name: &str, err: f64| {
        println!("composite {name}: max rel err {err:.3e}");
        assert!(err <= 1e-4, "{name} fd error {err}");
    };
    let xs_a = vec![
        normal::<f64>(&[2, 3, 4, 4], &mut rng),
        normal::<f64>(&[4, 3, 3, 3], &mut rng),
        normal::<f64>(&[16], &mut rng),
        normal::<f64>(&[16], &mut rng),
        normal::<f64>(&[16, 3], &mut rng),
    ];
    run("a", finite_diff_check_multi(composite_a, &xs_a, DEFAULT_STEP).unwrap());

    let coords = Tensor::from_vec(&[1, 3, 2], vec![1.4, 2.3, 3.5, 1.2, 0.8, 2.6]).unwrap();
    let xs_b = vec![normal::<f64>(&[2, 4, 5], &mut rng), coords, normal::<f64>(&[2, 1, 3], &mut rng)];
    run("b", finite_diff_check_multi(composite_b, &xs_b, DEFAULT_STEP).unwrap());

    let xs_c = vec![normal::<f64>(&[7], &mut rng)];
    run("c", finite_diff_check_multi(composite_c, &xs_c, DEFAULT_STEP).unwrap());
}

#[test]
fn backward_is_linear_in_the_loss() {
    let mut rng = RngSeed(90).rng();
    let x0 = normal::<f64>(&[3, 4], &mut rng);
    let (alpha, beta) = (0.7, -1.3);

    let grad_of = |combine: &dyn Fn(&Tape<f64>, &Tensor<f64>, &Tensor<f64>) -> Tensor<f64>| -> Vec<f64> {
        let t = Tape::new();
        let x = Tensor::param_from_vec(x0.shape(), x0.data().to_vec()).unwrap();
        let l1 = t.sum_all(&t.mul(&x, &x).unwrap());
        let l2 = t.sum_all(&t.sigmoid(&x));
        let loss = combine(&t, &l1, &l2);
        t.backward(&loss).unwrap();
        x.grad_vec().unwrap()
    };

    let combined = grad_of(&|t, l1, l2| t.add(&t.scale(l1, alpha), &t.scale(l2, beta)).unwrap());
    let g1 = grad_of(&|t, l1, _| t.scale(l1, 1.0));
    let g2 = grad_of(&|t, _, l2| t.scale(l2, 1.0));
    for i in 0..combined.len() {
        let expect = alpha * g1[i] + beta * g2[i];
        assert!((combined[i] - expect).abs() <= 1e-6, "linearity at {i}: {} vs {}", combined[i], expect);
    }
}

fn forward_and_grads<E: Element>(seed: RngSeed) -> (Vec<E>, Vec<E>) {
    let mut rng = seed.rng();
    let t = Tape::new();
    let x = normal::<E>(&[2, 3, 8, 8], &mut rng);
    let w = normal::<E>(&[4, 3, 3, 3], &mut rng);
    let y = t.conv2d(&x, &w, 2, 1).unwrap();
    let y = t.sigmoid(&y);
    let loss = t.mean_all(&t.mul(&y, &y).unwrap());
    t.backward(&loss).unwrap();
    (y.data().to_vec(), w.grad_vec().unwrap())
}

#[test]
fn identical_seeds_are_bit_identical() {
    let (f1, g1) = forward_and_grads::<f32>(RngSeed(123));
    let (f2, g2) = forward_and_grads::<f32>(RngSeed(123));
    assert!(f1.iter().zip(&f2).all(|(a, b)| a.to_bits() == b.to_bits()));
    assert!(g1.iter().zip(&g2).all(|(a, b)| a.to_bits() == b.to_bits()));
    let (f3, _) = forward_and_grads::<f32>(RngSeed(124));
    assert!(f1.iter().zip(&f3).any(|(a, b)| a.to_bits() != b.to_bits()));
}

#[test]
fn scalar_literal_helper_round_trips() {
    assert_eq!(lit::<f64>(0.25), 0.25);
    assert_eq!(lit::<f32>(0.25), 0.25f32);
}
