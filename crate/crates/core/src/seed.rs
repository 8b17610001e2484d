//! Seed derivation. Every random stream in a run is derived from the master
//! seed plus a stream tag and up to two indices, so engines that share a
//! master seed draw identical client shuffles.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const STREAM_INIT: u64 = 1;
pub const STREAM_SHUFFLE: u64 = 2;
pub const STREAM_PARTITION: u64 = 3;
pub const STREAM_SYNTH_TRAIN: u64 = 4;
pub const STREAM_SYNTH_TEST: u64 = 5;
pub const STREAM_HETEROGENEITY: u64 = 6;
pub const STREAM_TRUNK: u64 = 7;

/// SplitMix64 finaliser.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive(master: u64, stream: u64, a: u64, b: u64) -> u64 {
    mix(mix(mix(mix(master) ^ stream) ^ a) ^ b)
}

/// Per-epoch shuffle seed for one client.
pub fn shuffle_seed(master: u64, client: usize, epoch: u64) -> u64 {
    derive(master, STREAM_SHUFFLE, client as u64, epoch)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
