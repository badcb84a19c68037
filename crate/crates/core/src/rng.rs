//! The single pseudo-random generator family used across the crate.
//!
//! Every random draw goes through [`ChaCha8Rng`], seeded from a `u64` with
//! `SeedableRng::seed_from_u64`. Independent streams (one per simulated
//! trajectory, for example) are derived with [`stream`], which selects the
//! ChaCha stream id without consuming the parent generator. ChaCha output is
//! platform independent, so a recorded seed reproduces a dataset anywhere.

pub use rand_chacha::ChaCha8Rng as Rng;

use rand::SeedableRng;

pub fn seeded(seed: u64) -> Rng {
    Rng::seed_from_u64(seed)
}

/// Generator for sub-stream `index` of `seed`.
pub fn stream(seed: u64, index: u64) -> Rng {
    let mut rng = Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Standard normal draw.
pub fn normal(rng: &mut Rng) -> f64 {
    use rand::Rng as _;
    rng.sample(rand_distr::StandardNormal)
}
