//! Counter-based seed expansion.
//!
//! A root seed fans out to per-replication seeds, and each replication owns
//! one ChaCha stream per randomness source. A stream depends only on
//! `(root, replication, source)`, so every policy evaluated on the same
//! replication sees identical contexts and valuations.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Contexts = 1,
    Xi = 2,
    Zeta = 3,
    Auxiliary = 4,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeedTree {
    root: u64,
}

impl SeedTree {
    pub fn new(root: u64) -> Self {
        Self { root }
    }

    pub fn root(&self) -> u64 {
        self.root
    }

    pub fn replication_seed(&self, replication: usize) -> u64 {
        splitmix64(splitmix64(self.root) ^ (replication as u64).wrapping_mul(0xD6E8_FEB8_6659_FD93))
    }

    pub fn stream(&self, replication: usize, stream: Stream) -> ChaCha8Rng {
        stream_rng(self.replication_seed(replication), stream)
    }
}

pub fn stream_rng(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

pub fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
