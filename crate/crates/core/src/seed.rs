//! Seed derivation.
//!
//! Every random stream in the crate is derived from one master seed and a
//! component tag: `derive(master, tag) = splitmix64(master ^ fnv1a64(tag))`.
//! Tags in use are listed in [`tags`].

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub mod tags {
    pub const SYNTH: &str = "synth";
    pub const SIGN: &str = "sign";
    pub const MODEL_INIT: &str = "model.init";
    pub const EPISODES: &str = "train.episodes";
    pub const SHUFFLE: &str = "train.shuffle";
    /// Episode starts of `replay` and `evaluate`.
    pub const REPLAY: &str = "replay";
}

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash = 0xcbf2_9ce4_8422_2325_u64;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x0100_0000_01b3);
    }
    hash
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn derive(master: u64, tag: &str) -> u64 {
    splitmix64(master ^ fnv1a64(tag.as_bytes()))
}

/// Generator behind every seeded stream.
pub type SeedRng = ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn derived_rng(master: u64, tag: &str) -> ChaCha8Rng {
    rng(derive(master, tag))
}
