//! Named, independently reproducible random streams.
//!
//! Every consumer of randomness asks for a stream keyed by the run seed and a
//! purpose string (plus an optional index), so adding draws in one place never
//! shifts the numbers another place sees.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn stream(seed: u64, name: &str) -> Rng {
    stream_indexed(seed, name, 0)
}

pub fn stream_indexed(seed: u64, name: &str, index: u64) -> Rng {
    let key = splitmix(splitmix(seed) ^ fnv1a(name.as_bytes())) ^ splitmix(index.wrapping_add(0x5851_f42d));
    ChaCha8Rng::seed_from_u64(splitmix(key))
}
