//! Seeded randomness helpers.
//!
//! Every randomized operation in this crate is a pure function of
//! `(inputs, seed)`. All generators are `Xoshiro256PlusPlus` seeded
//! through `seed_from_u64`, which is stable across platforms.

use rand::Rng;
use rand::SeedableRng;
use rand_xoshiro::Xoshiro256PlusPlus;

pub(crate) type SeededRng = Xoshiro256PlusPlus;

pub(crate) fn rng_from(seed: u64) -> SeededRng {
    Xoshiro256PlusPlus::seed_from_u64(seed)
}

/// Fisher-Yates shuffle of `0..n`, seeded.
pub(crate) fn shuffled_indices(n: usize, rng: &mut SeededRng) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.gen_range(0..=i);
        idx.swap(i, j);
    }
    idx
}
