//! Seed derivation.
//!
//! A replicate seed is FNV-1a (64-bit) over the bytes of the master seed
//! (little endian), the scenario id (UTF-8), a `0xff` separator and the
//! replicate index (little endian), passed through the SplitMix64 finalizer.
//! Independent streams inside a replicate use [`stream_seed`].

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a(bytes: impl IntoIterator<Item = u8>, mut h: u64) -> u64 {
    for b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn replicate_seed(master_seed: u64, scenario_id: &str, index: u64) -> u64 {
    let h = fnv1a(master_seed.to_le_bytes(), FNV_OFFSET);
    let h = fnv1a(scenario_id.bytes().chain([0xff]), h);
    splitmix64(fnv1a(index.to_le_bytes(), h))
}

/// Seed of sub-stream `k` of a replicate (0 simulates data, 1.. fit methods).
pub fn stream_seed(replicate: u64, k: u64) -> u64 {
    splitmix64(replicate ^ k.wrapping_mul(0xd6e8_feb8_6659_fd93))
}
