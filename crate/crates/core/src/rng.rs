//! Seed derivation and the generator every sampler in the crate uses.
//!
//! Sub-seeds are derived with the SplitMix64 finalizer so that folds,
//! groups and speakers each get their own independent stream while the
//! whole run stays a function of one master seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// SplitMix64 output function.
pub const fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives the seed of stream `index` under `seed`.
pub const fn derive(seed: u64, index: u64) -> u64 {
    mix64(mix64(seed) ^ index.wrapping_mul(0xD6E8_FEB8_6659_FD93))
}

/// Seed of fold `fold` under a master seed.
pub const fn fold_seed(master: u64, fold: u32) -> u64 {
    derive(master, fold as u64)
}

/// 64-bit FNV-1a, used to key per-speaker streams by identifier.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xCBF2_9CE4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    h
}

/// Domain tags keep unrelated samplers on distinct streams.
pub(crate) mod tag {
    pub const ROSTER: u64 = 0x524F_5354;
    pub const TRAIN_USERS: u64 = 0x5452_5531;
    pub const TRAIN_UTTS: u64 = 0x5452_5533;
    pub const MERGE: u64 = 0x4D52_4745;
    pub const GENUINE: u64 = 0x4745_4E55;
    pub const IMPOSTOR: u64 = 0x494D_5053;
    pub const SYNTH_SCORES: u64 = 0x5353_4352;
    pub const SYNTH_EMBED: u64 = 0x5345_4D42;
}

pub fn rng_from(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
