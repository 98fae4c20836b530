//! Deterministic seed derivation.
//!
//! Every random draw in the system comes from a ChaCha stream seeded through
//! here, keyed by purpose and index rather than by call order. Step `k` of a
//! training run therefore samples the same batch and dropout masks whether
//! the run started fresh or resumed from a checkpoint.

pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Derive a child seed from a base seed and a purpose path.
pub fn derive(base: u64, parts: &[u64]) -> u64 {
    let mut acc = splitmix64(base);
    for &p in parts {
        acc = splitmix64(acc ^ p.wrapping_mul(0xA076_1D64_78BD_642F));
    }
    acc
}

/// Purpose tags for the derivation paths.
pub mod tag {
    pub const MODEL_INIT: u64 = 1;
    pub const BATCH_SAMPLING: u64 = 2;
    pub const DROPOUT: u64 = 3;
    pub const CORPUS: u64 = 4;
    pub const CONTENT_PRETRAIN: u64 = 5;
    pub const SPEAKER_PRETRAIN: u64 = 6;
}
