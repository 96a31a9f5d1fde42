//! Deterministic stream RNG. Every randomness source derives from
//! (seed, stream label) through a fixed hash, so regeneration is stable
//! across platforms and releases.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub struct StreamRng {
    inner: ChaCha8Rng,
}

impl StreamRng {
    pub fn new(seed: u64, stream: &str) -> StreamRng {
        let mut hasher = Sha256::new();
        hasher.update(b"edsim.stream.v1");
        hasher.update(seed.to_le_bytes());
        hasher.update(stream.as_bytes());
        let digest = hasher.finalize();
        let mut key = [0u8; 32];
        key.copy_from_slice(&digest);
        StreamRng {
            inner: ChaCha8Rng::from_seed(key),
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform-ish pick in `0..n`. Modulo bias is irrelevant at these sizes
    /// and keeps the mapping independent of rand's range algorithms.
    pub fn pick(&mut self, n: usize) -> usize {
        assert!(n > 0, "pick from empty range");
        (self.next_u64() % n as u64) as usize
    }

    /// True with probability `pct`/100.
    pub fn chance(&mut self, pct: u64) -> bool {
        self.next_u64() % 100 < pct
    }

    pub fn range(&mut self, lo: i64, hi: i64) -> i64 {
        assert!(hi > lo);
        lo + (self.next_u64() % (hi - lo) as u64) as i64
    }
}

/// Stable 64-bit hash for deterministic derived quantities (transfer times,
/// facility capacities).
pub fn stable_hash(parts: &[&str]) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(b"edsim.hash.v1");
    for part in parts {
        hasher.update((part.len() as u64).to_le_bytes());
        hasher.update(part.as_bytes());
    }
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().unwrap())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let mut a1 = StreamRng::new(42, "entities");
        let mut a2 = StreamRng::new(42, "entities");
        let mut b = StreamRng::new(42, "noise");
        let xs: Vec<u64> = (0..8).map(|_| a1.next_u64()).collect();
        let ys: Vec<u64> = (0..8).map(|_| a2.next_u64()).collect();
        let zs: Vec<u64> = (0..8).map(|_| b.next_u64()).collect();
        assert_eq!(xs, ys);
        assert_ne!(xs, zs);
    }

    #[test]
    fn stable_hash_is_stable() {
        assert_eq!(
            stable_hash(&["enc-0001", "fac-0001"]),
            stable_hash(&["enc-0001", "fac-0001"])
        );
        assert_ne!(
            stable_hash(&["enc-0001", "fac-0001"]),
            stable_hash(&["enc-0001", "fac-0002"])
        );
    }
}
