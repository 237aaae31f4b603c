//! Seeded sampling helpers. Every random quantity in the crate flows
//! through a [`ChaCha8Rng`] so reports are reproducible across platforms.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::point::norm;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Uniform sample from the cube `center ± radius`.
pub fn in_cube(rng: &mut ChaCha8Rng, center: &[f64], radius: f64) -> Vec<f64> {
    center
        .iter()
        .map(|c| c + radius * rng.gen_range(-1.0..=1.0))
        .collect()
}

/// Uniformly distributed unit vector in `n` dimensions.
pub fn unit_vector(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..=1.0)).collect();
        let r = norm(&v);
        if r > 0.1 && r <= 1.0 {
            return v.into_iter().map(|a| a / r).collect();
        }
    }
}

/// Random vector whose Euclidean norm is uniform in `[min, max]`.
pub fn with_norm(rng: &mut ChaCha8Rng, n: usize, min: f64, max: f64) -> Vec<f64> {
    let r = if max > min { rng.gen_range(min..=max) } else { min };
    unit_vector(rng, n).into_iter().map(|a| a * r).collect()
}

/// Random vector inside the ball of radius `max`.
pub fn in_ball(rng: &mut ChaCha8Rng, n: usize, max: f64) -> Vec<f64> {
    let r = max * rng.gen_range(0.0f64..=1.0).powf(1.0 / n as f64);
    unit_vector(rng, n).into_iter().map(|a| a * r).collect()
}

pub fn uniform(rng: &mut ChaCha8Rng, min: f64, max: f64) -> f64 {
    rng.gen_range(min..=max)
}
