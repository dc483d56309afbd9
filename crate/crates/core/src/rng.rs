//! Counter-based random streams.
//!
//! Every Monte Carlo consumer derives its generator from a seed plus a list of
//! integer keys (trajectory index, batch, rung, ...). The generator depends
//! only on those keys, so results do not change with the number of threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Generator for the stream identified by `keys` under `seed`.
pub fn stream(seed: u64, keys: &[u64]) -> ChaCha8Rng {
    let mut id = 0x5851_f42d_4c95_7f2d_u64;
    for &k in keys {
        id = splitmix64(id ^ k);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}
