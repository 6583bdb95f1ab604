use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::{lit, Element, Tensor};

/// Seed for every random decision in the system. Identical seeds give
/// bit-identical streams on every platform (ChaCha, not the OS generator).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RngSeed(pub u64);

impl RngSeed {
    pub fn rng(self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.0)
    }

    /// Independent child seed for a named stream.
    pub fn derive(self, tag: &str) -> RngSeed {
        let mut h = 0xcbf29ce484222325u64; // FNV-1a
        for b in tag.as_bytes() {
            h ^= *b as u64;
            h = h.wrapping_mul(0x100000001b3);
        }
        RngSeed(splitmix64(self.0 ^ h))
    }

    pub fn derive_index(self, index: u64) -> RngSeed {
        RngSeed(splitmix64(self.0 ^ splitmix64(index.wrapping_add(0x9e3779b97f4a7c15))))
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Uniform values in `±sqrt(1/fan_in)`. Drawn in f64 and converted, so the
/// stream consumed is identical for every element type.
pub fn uniform_fan_in<E: Element>(shape: &[usize], fan_in: usize, rng: &mut ChaCha8Rng) -> Tensor<E> {
    let bound = (1.0 / fan_in.max(1) as f64).sqrt();
    let dist = Uniform::new_inclusive(-bound, bound);
    let n: usize = shape.iter().product();
    let data: Vec<E> = (0..n).map(|_| lit(dist.sample(rng))).collect();
    Tensor::param_from_vec(shape, data).expect("shape/data agree")
}

/// Standard-normal values (Box-Muller over the shared f64 stream).
pub fn normal<E: Element>(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<E> {
    let dist = Uniform::new(f64::EPSILON, 1.0);
    let n: usize = shape.iter().product();
    let mut data = Vec::with_capacity(n);
    while data.len() < n {
        let u1: f64 = dist.sample(rng);
        let u2: f64 = dist.sample(rng);
        let r = (-2.0 * u1.ln()).sqrt();
        let (s, c) = (2.0 * std::f64::consts::PI * u2).sin_cos();
        data.push(lit(r * c));
        if data.len() < n {
            data.push(lit(r * s));
        }
    }
    Tensor::param_from_vec(shape, data).expect("shape/data agree")
}
