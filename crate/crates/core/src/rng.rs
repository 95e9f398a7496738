//! Portable seeded randomness.
//!
//! The generator is ChaCha8 (`rand_chacha`), seeded from SHA-256 of
//! `seed.to_le_bytes() || label`. Integers in `[0, n)` are drawn by rejection
//! sampling on `next_u64` (discarding draws at or above the largest multiple
//! of `n`). Shuffling is Fisher-Yates from the last position downwards;
//! sampling without replacement is a partial Fisher-Yates over `0..len` from
//! the front. Every implementation following these rules reproduces the
//! same orders.

use alloc::vec::Vec;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use sha2::{Digest, Sha256};

pub struct SeededRng(ChaCha8Rng);

impl SeededRng {
    /// Independent stream for `(seed, label)`.
    pub fn derive(seed: u64, label: &str) -> Self {
        let mut hasher = Sha256::new();
        hasher.update(seed.to_le_bytes());
        hasher.update(label.as_bytes());
        Self(ChaCha8Rng::from_seed(hasher.finalize().into()))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.0.next_u64()
    }

    /// Uniform integer in `0..n`; `n` must be positive.
    pub fn below(&mut self, n: usize) -> usize {
        assert!(n > 0, "below(0)");
        let n = n as u64;
        let zone = u64::MAX - (u64::MAX % n);
        loop {
            let x = self.0.next_u64();
            if x < zone {
                return (x % n) as usize;
            }
        }
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }

    /// `k` distinct indices from `0..len`, in draw order.
    pub fn sample_indices(&mut self, len: usize, k: usize) -> Vec<usize> {
        assert!(k <= len, "sample of {k} from {len}");
        let mut idx: Vec<usize> = (0..len).collect();
        for i in 0..k {
            let j = i + self.below(len - i);
            idx.swap(i, j);
        }
        idx.truncate(k);
        idx
    }
}

/// Derives a 64-bit seed for a named sub-stream.
pub fn derive_seed(seed: u64, label: &str) -> u64 {
    SeededRng::derive(seed, label).next_u64()
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::collections::BTreeSet;
    use proptest::prelude::*;

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a: Vec<u64> = (0..4).map({ let mut r = SeededRng::derive(7, "x"); move |_| r.next_u64() }).collect();
        let b: Vec<u64> = (0..4).map({ let mut r = SeededRng::derive(7, "x"); move |_| r.next_u64() }).collect();
        let c: Vec<u64> = (0..4).map({ let mut r = SeededRng::derive(7, "y"); move |_| r.next_u64() }).collect();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn below_is_roughly_uniform() {
        let mut r = SeededRng::derive(1, "uniform");
        let mut counts = [0u32; 5];
        for _ in 0..50_000 {
            counts[r.below(5)] += 1;
        }
        for c in counts {
            assert!((9_000..11_000).contains(&c), "{counts:?}");
        }
    }

    proptest! {
        #[test]
        fn sample_is_distinct_and_in_range(len in 0usize..60, frac in 0.0f64..=1.0, seed: u64) {
            let k = ((len as f64) * frac) as usize;
            let s = SeededRng::derive(seed, "s").sample_indices(len, k);
            prop_assert_eq!(s.len(), k);
            let set: BTreeSet<_> = s.iter().copied().collect();
            prop_assert_eq!(set.len(), k);
            prop_assert!(s.iter().all(|&i| i < len));
        }

        #[test]
        fn shuffle_is_permutation(mut v in proptest::collection::vec(0u32..100, 0..40), seed: u64) {
            let mut sorted = v.clone();
            sorted.sort_unstable();
            SeededRng::derive(seed, "p").shuffle(&mut v);
            v.sort_unstable();
            prop_assert_eq!(v, sorted);
        }
    }
}
