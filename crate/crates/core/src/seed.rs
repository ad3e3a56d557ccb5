//! Deterministic seed splitting.
//!
//! A run's seed is `mix(base, tag, indices...)`: each word is folded in by
//! xor followed by one splitmix64 finalization, so distinct paths give
//! unrelated streams.

/// SplitMix64 output function.
pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Stream tags.
pub mod tag {
    pub const DATASET: u64 = 1;
    pub const PREDICTIVE: u64 = 2;
    pub const ORACLE: u64 = 3;
    pub const EP: u64 = 4;
    pub const LOSS_EP: u64 = 5;
    pub const CLUTTER: u64 = 6;
}

pub fn derive_seed(base: u64, tag: u64, indices: &[u64]) -> u64 {
    let mut h = splitmix64(base ^ splitmix64(tag));
    for &i in indices {
        h = splitmix64(h ^ i);
    }
    h
}
