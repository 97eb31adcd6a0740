//! Counter-based edge randomness.
//!
//! The bit of edge `e` in sample `(seed, sample_id)` is fixed by:
//!
//! ```text
//! mix64(z):  z ^= z >> 30; z *= 0xbf58476d1ce4e5b9;
//!            z ^= z >> 27; z *= 0x94d049bb133111eb;
//!            z ^= z >> 31
//! key(e):    h = 0x243f6a8885a308d3 ^ d
//!            for c in (smaller endpoint coords, larger endpoint coords):
//!                h = mix64(h ^ (c as i64 as u64))
//! stream:    s = mix64(mix64(seed ^ 0x9e3779b97f4a7c15) ^ sample_id * 0xd1b54a32d192ed03)
//! u:         mix64(s ^ key(e))
//! open:      (u >> 11) < floor(p * 2^53)        (p = 1 always open)
//! ```
//!
//! All arithmetic wraps modulo 2^64. Reference vectors live in
//! `docs/edge_hash.md` and are checked by the tests below.

use crate::lattice::EdgeId;

pub const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;
pub const SAMPLE_MUL: u64 = 0xd1b5_4a32_d192_ed03;
pub const EDGE_SEED: u64 = 0x243f_6a88_85a3_08d3;

#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn edge_key(e: &EdgeId) -> u64 {
    let (a, b) = e.endpoints();
    let mut h = EDGE_SEED ^ a.dim() as u64;
    for &c in a.coords().iter().chain(b.coords()) {
        h = mix64(h ^ (c as i64 as u64));
    }
    h
}

/// Key of the `index`-th edge of an abstract graph.
pub fn indexed_key(salt: u64, index: u64) -> u64 {
    mix64(mix64(salt ^ EDGE_SEED) ^ index.wrapping_mul(GOLDEN))
}

pub fn stream_key(seed: u64, sample_id: u64) -> u64 {
    mix64(mix64(seed ^ GOLDEN) ^ sample_id.wrapping_mul(SAMPLE_MUL))
}

/// Derives an independent seed, e.g. for nested resampling.
pub fn derive_seed(seed: u64, tag: u64, index: u64) -> u64 {
    mix64(mix64(seed ^ tag.wrapping_mul(GOLDEN)) ^ index.wrapping_mul(SAMPLE_MUL))
}

pub fn threshold(p: f64) -> u64 {
    if p >= 1.0 {
        1 << 53
    } else if p <= 0.0 {
        0
    } else {
        (p * (1u64 << 53) as f64) as u64
    }
}

/// One sample's randomness: stream key and open threshold.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Stream {
    pub key: u64,
    pub threshold: u64,
}

impl Stream {
    pub fn new(seed: u64, sample_id: u64, p: f64) -> Self {
        Stream { key: stream_key(seed, sample_id), threshold: threshold(p) }
    }

    #[inline]
    pub fn uniform_bits(&self, edge_key: u64) -> u64 {
        mix64(self.key ^ edge_key) >> 11
    }

    #[inline]
    pub fn open(&self, edge_key: u64) -> bool {
        self.uniform_bits(edge_key) < self.threshold
    }

    /// The underlying uniform in `[0, 1)`.
    pub fn uniform(&self, edge_key: u64) -> f64 {
        self.uniform_bits(edge_key) as f64 / (1u64 << 53) as f64
    }
}
