//! Deterministic random sampling helpers.
//!
//! Everything stochastic in the pipeline draws from a seeded ChaCha20 stream,
//! so a (seed, call-order) pair fully determines all outputs.

use rand::{Rng, RngExt, SeedableRng};
use rand_chacha::ChaCha20Rng;

pub fn seeded(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

/// Derive an independent stream for a named sub-task of a run.
pub fn derive(seed: u64, label: &str, index: u64) -> ChaCha20Rng {
    // FNV-1a over the label keeps sub-streams stable across code changes.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    ChaCha20Rng::seed_from_u64(seed ^ h ^ index.wrapping_mul(0x9e37_79b9_7f4a_7c15))
}

/// Standard normal via Box-Muller on two uniform draws.
pub fn normal_f64(rng: &mut impl Rng) -> f64 {
    let u1: f64 = rng.random::<f64>().max(1e-12);
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

pub fn normal_f32(rng: &mut impl Rng) -> f32 {
    normal_f64(rng) as f32
}

/// Uniform in `[lo, hi)`.
pub fn uniform(rng: &mut impl Rng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}
