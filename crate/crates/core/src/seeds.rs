//! Derivation of independent sub-seeds from a base seed.
//!
//! Every replication, percentile and resampling stream gets its own seed
//! computed from `(base, tag, index)`, so results never depend on the order
//! in which work is scheduled.

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

/// SplitMix64 finaliser.
pub fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed for stream `index` of kind `tag` under `base`.
pub fn derive(base: u64, tag: u64, index: u64) -> u64 {
    let a = mix(base.wrapping_add(GOLDEN));
    let b = mix(a ^ tag.wrapping_mul(GOLDEN));
    mix(b ^ index.wrapping_add(1).wrapping_mul(GOLDEN))
}

pub const TAG_DATA: u64 = 1;
pub const TAG_SIGNS: u64 = 2;
pub const TAG_FRESH: u64 = 3;
