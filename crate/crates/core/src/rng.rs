//! Deterministic, splittable randomness.
//!
//! Every random consumer in a run (filler, emptier, trial setup) draws from
//! its own ChaCha stream keyed by `(master seed, trial index, consumer id)`.
//! Swapping one consumer's implementation, or running trials in parallel,
//! never perturbs another consumer's stream, which is what the replay and
//! obliviousness checks rely on.

use crate::num::FillValue;
use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Stream identifiers for the standard consumers.
pub mod consumer {
    pub const FILLER: u64 = 1;
    pub const EMPTIER: u64 = 2;
    pub const SETUP: u64 = 3;
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E3779B97F4A7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

/// A deterministic RNG stream derived from `(master, trial, consumer)`.
#[derive(Clone, Debug)]
pub struct SplitRng(ChaCha8Rng);

impl SplitRng {
    pub fn new(master: u64, trial: u64, consumer: u64) -> Self {
        let mut st = master ^ 0xA5A5_A5A5_5A5A_5A5A;
        let mut words = [0u64; 4];
        words[0] = splitmix64(&mut st);
        st ^= trial.wrapping_mul(0xD1B5_4A32_D192_ED03);
        words[1] = splitmix64(&mut st);
        st ^= consumer.wrapping_mul(0x8CB9_2BA7_2F3D_8DD7);
        words[2] = splitmix64(&mut st);
        words[3] = splitmix64(&mut st);
        let mut key = [0u8; 32];
        for (i, w) in words.iter().enumerate() {
            key[i * 8..(i + 1) * 8].copy_from_slice(&w.to_le_bytes());
        }
        SplitRng(ChaCha8Rng::from_seed(key))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.0.next_u64()
    }

    pub fn next_u32(&mut self) -> u32 {
        self.0.next_u32()
    }

    /// Uniform value in `[0, n)`. `n` must be positive.
    pub fn below(&mut self, n: u64) -> u64 {
        debug_assert!(n > 0);
        // Modulo bias is < 2^-32 for every n used here.
        self.next_u64() % n
    }

    /// Uniform draw from `[0, 1)` with denominator 2^32.
    pub fn unit<N: FillValue>(&mut self) -> N {
        N::from_ratio(self.next_u32() as i64, 1i64 << 32)
    }

    /// Bernoulli draw with probability `num/den`.
    pub fn chance(&mut self, num: u64, den: u64) -> bool {
        debug_assert!(den > 0 && num <= den);
        self.below(den) < num
    }

    /// A uniformly random `k`-subset of `0..n`, in selection order.
    pub fn subset(&mut self, n: usize, k: usize) -> Vec<usize> {
        debug_assert!(k <= n);
        let mut ids: Vec<usize> = (0..n).collect();
        for i in 0..k {
            let j = i + self.below((n - i) as u64) as usize;
            ids.swap(i, j);
        }
        ids.truncate(k);
        ids
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::num::Rat;

    #[test]
    fn streams_are_deterministic_and_independent() {
        let mut a = SplitRng::new(7, 0, consumer::FILLER);
        let mut b = SplitRng::new(7, 0, consumer::FILLER);
        let mut c = SplitRng::new(7, 0, consumer::EMPTIER);
        let xs: Vec<u64> = (0..8).map(|_| a.next_u64()).collect();
        let ys: Vec<u64> = (0..8).map(|_| b.next_u64()).collect();
        let zs: Vec<u64> = (0..8).map(|_| c.next_u64()).collect();
        assert_eq!(xs, ys);
        assert_ne!(xs, zs);
    }

    #[test]
    fn subset_is_distinct_and_in_range() {
        let mut r = SplitRng::new(1, 2, 3);
        for _ in 0..50 {
            let s = r.subset(10, 4);
            assert_eq!(s.len(), 4);
            let mut t = s.clone();
            t.sort_unstable();
            t.dedup();
            assert_eq!(t.len(), 4);
            assert!(s.iter().all(|&x| x < 10));
        }
    }

    #[test]
    fn unit_draws_land_in_unit_interval() {
        let mut r = SplitRng::new(9, 9, 9);
        for _ in 0..100 {
            let u: Rat = r.unit();
            assert!(u >= Rat::from_integer(0.into()));
            assert!(u < Rat::from_integer(1.into()));
        }
    }
}
