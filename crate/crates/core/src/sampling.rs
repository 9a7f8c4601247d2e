//! Seeded random sampling of chart points.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type SampleRng = ChaCha8Rng;

pub fn rng(seed: u64) -> SampleRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Uniform point in `[-half_width, half_width]ⁿ`.
pub fn in_box(rng: &mut SampleRng, n: usize, half_width: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-half_width..=half_width)).collect()
}

/// Uniform point in the open Euclidean ball of the given radius.
pub fn in_ball(rng: &mut SampleRng, n: usize, radius: f64) -> Vec<f64> {
    loop {
        let p = in_box(rng, n, radius);
        let r2: f64 = p.iter().map(|c| c * c).sum();
        if r2 < radius * radius {
            return p;
        }
    }
}

/// Uniformly distributed unit vector.
pub fn unit_vector(rng: &mut SampleRng, n: usize) -> Vec<f64> {
    loop {
        let p = in_ball(rng, n, 1.0);
        let r = p.iter().map(|c| c * c).sum::<f64>().sqrt();
        if r > 1e-3 {
            return p.into_iter().map(|c| c / r).collect();
        }
    }
}

/// Nonzero vector with norm in `[lo, hi]`.
pub fn nonzero(rng: &mut SampleRng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    let r = rng.gen_range(lo..=hi);
    unit_vector(rng, n).into_iter().map(|c| c * r).collect()
}
