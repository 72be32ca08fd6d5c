//! Seeded 64-bit mixing and a small deterministic generator.
//!
//! Every randomized component in this crate (sketch row hashing, cuckoo
//! victim selection, Zipf sampling) is driven from these two primitives so
//! that a run is reproducible from its seed alone, independent of platform
//! and of any external RNG crate's version.

/// Finalizer with full avalanche (the SplitMix64 output function).
#[inline]
pub fn mix64(x: u64) -> u64 {
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seeded hash of a 64-bit key. Distinct seeds give independent-looking
/// hash functions; the same (key, seed) pair always maps to the same value.
#[inline]
pub fn hash_key(key: u64, seed: u64) -> u64 {
    mix64(key ^ seed.rotate_left(31).wrapping_mul(0x9e37_79b9_7f4a_7c15))
}

/// SplitMix64 sequence generator.
#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9e37_79b9_7f4a_7c15);
        mix64(self.state)
    }

    /// Uniform draw from `[0, 1)` with 53 bits of precision.
    #[inline]
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform draw from `[0, bound)`. Modulo bias is negligible for the
    /// bounds used here (victim slots, test operation mixes).
    #[inline]
    pub fn next_below(&mut self, bound: u64) -> u64 {
        debug_assert!(bound > 0);
        self.next_u64() % bound
    }
}
