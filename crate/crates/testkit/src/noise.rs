//! Independent reimplementation of the deterministic noise streams used by
//! the sampling kernels, for cross-checking without sharing code.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Uniform draw in the open interval (0, 1): `(next_u64 + 0.5) · 2⁻⁶⁴`.
pub fn open_unit(rng: &mut ChaCha8Rng) -> f64 {
    (rng.next_u64() as f64 + 0.5) * (1.0 / 18446744073709551616.0)
}

/// Standard Gumbel draw `−ln(−ln(u))`.
pub fn gumbel(rng: &mut ChaCha8Rng) -> f64 {
    let u = open_unit(rng);
    -(-u.ln()).ln()
}

/// Row-major n×m Gumbel noise matrix from a fresh stream seeded with `seed`.
pub fn gumbel_matrix(seed: u64, n: usize, m: usize) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| (0..m).map(|_| gumbel(&mut rng)).collect())
        .collect()
}

/// SplitMix64-style seed mix combining run seed, epoch, and record index.
pub fn mix_seed(global: u64, epoch: u64, record: u64) -> u64 {
    let mut z = global
        .wrapping_add(epoch.wrapping_mul(0x9E3779B97F4A7C15))
        .wrapping_add(record.wrapping_mul(0xBF58476D1CE4E5B9));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}
