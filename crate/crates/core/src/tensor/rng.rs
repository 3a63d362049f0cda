use rand_core::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256StarStar;

use super::{Shape, Tensor};

/// Deterministic 64-bit generator (xoshiro256** seeded through SplitMix64).
///
/// Samples depend only on the seed and the number of draws, never on the
/// platform or thread count.
#[derive(Clone, Debug)]
pub struct Rng64 {
    inner: Xoshiro256StarStar,
    spare: Option<f64>,
}

impl Rng64 {
    pub fn new(seed: u64) -> Self {
        Rng64 { inner: Xoshiro256StarStar::seed_from_u64(seed), spare: None }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform in `[0, 1)` with 53 bits of resolution.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    /// Uniform integer in `[0, n)`.
    pub fn below(&mut self, n: usize) -> usize {
        (self.next_f64() * n as f64) as usize % n.max(1)
    }

    /// Standard normal via Box–Muller; the second value of each pair is kept
    /// for the following call.
    pub fn normal(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        let u1 = 1.0 - self.next_f64();
        let u2 = self.next_f64();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * u2;
        self.spare = Some(r * theta.sin());
        r * theta.cos()
    }
}

pub fn rng_normal(seed: u64, shape: impl Into<Shape>) -> Tensor {
    let shape = shape.into();
    let mut rng = Rng64::new(seed);
    let data = (0..shape.numel()).map(|_| rng.normal() as f32).collect();
    Tensor::new(shape, data).expect("shape and buffer agree")
}

pub fn rng_uniform(seed: u64, shape: impl Into<Shape>, lo: f32, hi: f32) -> Tensor {
    let shape = shape.into();
    let mut rng = Rng64::new(seed);
    let data = (0..shape.numel()).map(|_| rng.uniform(lo as f64, hi as f64) as f32).collect();
    Tensor::new(shape, data).expect("shape and buffer agree")
}
