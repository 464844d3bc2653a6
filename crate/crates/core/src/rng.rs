//! Keyed random streams.
//!
//! Every random draw in the toolkit comes from an [`RngStream`] derived from
//! `(master_seed, phase, epoch, item_index)`. The derivation is:
//!
//! 1. `phase` is hashed with 64-bit FNV-1a.
//! 2. The 32-byte ChaCha8 key is the little-endian concatenation
//!    `master_seed || fnv1a(phase) || epoch || item_index`.
//!
//! The key is injective in `(master_seed, epoch, item_index)` for a given
//! phase, so two streams only coincide if all four components agree (modulo an
//! FNV collision between phase names). Because each stream depends only on its
//! key, work split across any number of threads draws the same values.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes.iter().fold(FNV_OFFSET, |h, &b| {
        (h ^ u64::from(b)).wrapping_mul(FNV_PRIME)
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct StreamKey {
    pub phase: String,
    pub epoch: u64,
    pub item_index: u64,
}

#[derive(Debug, Clone)]
pub struct RngStream {
    master_seed: u64,
    key: StreamKey,
    rng: ChaCha8Rng,
}

/// Pure function of its arguments; see the module docs for the key layout.
pub fn derive_stream(master_seed: u64, phase: &str, epoch: u64, item_index: u64) -> RngStream {
    let mut seed = [0u8; 32];
    seed[0..8].copy_from_slice(&master_seed.to_le_bytes());
    seed[8..16].copy_from_slice(&fnv1a64(phase.as_bytes()).to_le_bytes());
    seed[16..24].copy_from_slice(&epoch.to_le_bytes());
    seed[24..32].copy_from_slice(&item_index.to_le_bytes());
    RngStream {
        master_seed,
        key: StreamKey {
            phase: phase.to_owned(),
            epoch,
            item_index,
        },
        rng: ChaCha8Rng::from_seed(seed),
    }
}

impl RngStream {
    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn key(&self) -> &StreamKey {
        &self.key
    }

    /// Uniform draw from `[lo, hi)`; returns `lo` when the range is empty.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        if hi <= lo {
            return lo;
        }
        lo + (hi - lo) * self.rng.random::<f64>()
    }

    /// Uniform integer from `lo..=hi`.
    pub fn int_inclusive(&mut self, lo: i64, hi: i64) -> i64 {
        if hi <= lo {
            return lo;
        }
        self.rng.random_range(lo..=hi)
    }

    /// Uniform index below `n` (`n > 0`).
    pub fn index(&mut self, n: usize) -> usize {
        assert!(n > 0, "index() over an empty range");
        self.rng.random_range(0..n)
    }

    /// `true` with probability `p`; `p <= 0` never fires and `p >= 1` always does.
    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.rng.random::<f64>() < p
    }

    pub fn normal(&mut self, mean: f64, std: f64) -> f64 {
        if std <= 0.0 {
            return mean;
        }
        Normal::new(mean, std)
            .expect("finite positive std")
            .sample(&mut self.rng)
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        use rand::seq::SliceRandom;
        items.shuffle(&mut self.rng);
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}
