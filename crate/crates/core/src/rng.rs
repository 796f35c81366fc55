//! Seeded, platform-independent random streams.
//!
//! Every consumer draws from Xoshiro256++ seeded through SplitMix64
//! (`seed_from_u64`). Independent consumers of the same user seed are
//! separated by jumping the generator `2^128` steps per stream index, so their
//! sequences never overlap.

use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

pub type SeededRng = Xoshiro256PlusPlus;

/// Named sub-streams derived from one user seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Selection = 0,
    Coefficients = 1,
    Dataset = 2,
    FrozenModel = 3,
    LowRank = 4,
}

pub fn stream(seed: u64, which: Stream) -> SeededRng {
    let mut rng = SeededRng::seed_from_u64(seed);
    for _ in 0..which as u8 {
        rng.jump();
    }
    rng
}

/// Uniform index in `[low, high)`, sampled through `u64` so the result does
/// not depend on the platform's pointer width.
#[inline]
pub fn index_in<R: Rng + ?Sized>(rng: &mut R, low: usize, high: usize) -> usize {
    rng.random_range(low as u64..high as u64) as usize
}

/// Partial Fisher–Yates: moves a uniform `k`-subset of `pool` into its first
/// `k` slots and returns them.
pub fn sample_without_replacement<'a, T, R: Rng + ?Sized>(pool: &'a mut [T], k: usize, rng: &mut R) -> &'a [T] {
    let k = k.min(pool.len());
    for i in 0..k {
        let j = index_in(rng, i, pool.len());
        pool.swap(i, j);
    }
    &pool[..k]
}

/// Kaiming-uniform draws with linear gain: `U(-√(6/fan_in), √(6/fan_in))`.
pub fn kaiming_uniform<R: Rng + ?Sized>(fan_in: usize, count: usize, rng: &mut R) -> Vec<f64> {
    let bound = kaiming_bound(fan_in);
    (0..count).map(|_| rng.random_range(-bound..bound)).collect()
}

pub fn kaiming_bound(fan_in: usize) -> f64 {
    (6.0 / fan_in as f64).sqrt()
}
