//! Labeled seed derivation.
//!
//! Every random stream in the toolkit is derived from one master seed plus a
//! component label and an index, so independent stages (walks, negatives,
//! shuffling, initialization) can run in any order or in parallel and still
//! reproduce bit-for-bit.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The RNG used everywhere in the crate.
pub type Rng = ChaCha8Rng;

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

fn fnv1a(label: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    h
}

/// Derive a child seed from `master`, a component label and up to two indices.
pub fn derive(master: u64, label: &str, a: u64, b: u64) -> u64 {
    let mut s = splitmix64(master ^ fnv1a(label));
    s = splitmix64(s ^ a);
    splitmix64(s ^ b.rotate_left(32))
}

pub fn rng(master: u64, label: &str, a: u64, b: u64) -> Rng {
    Rng::seed_from_u64(derive(master, label, a, b))
}
