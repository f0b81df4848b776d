//! Stable seed derivation.
//!
//! Every stochastic component draws from its own ChaCha8 stream whose seed is
//! derived from the master seed and a path of labels, e.g.
//! `derive(master, &["rollout", "button_press"], &[cond, iter, sample])`.
//! The derivation is FNV-1a (64-bit) over the little-endian bytes of the master
//! seed, each label (terminated by `0xff`) and each index, followed by the
//! SplitMix64 finalizer. It never depends on thread scheduling, so streams are
//! identical between the parallel and sequential execution paths.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv(mut h: u64, bytes: &[u8]) -> u64 {
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn derive(master: u64, labels: &[&str], indices: &[u64]) -> u64 {
    let mut h = fnv(FNV_OFFSET, &master.to_le_bytes());
    for label in labels {
        h = fnv(h, label.as_bytes());
        h = fnv(h, &[0xff]);
    }
    for i in indices {
        h = fnv(h, &i.to_le_bytes());
    }
    splitmix(h)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
