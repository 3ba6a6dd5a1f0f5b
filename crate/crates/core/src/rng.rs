//! Deterministic random streams, one per `(seed, agent, purpose)`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    SolverDraw = 1,
    Training = 2,
    Testing = 3,
    Estimation = 4,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Independent stream for one agent and purpose. Streams never depend on how
/// many other streams exist or on evaluation order.
pub fn stream(seed: u64, agent: usize, purpose: Purpose) -> ChaCha8Rng {
    let key = splitmix64(seed) ^ splitmix64((agent as u64) << 8 | purpose as u64);
    ChaCha8Rng::seed_from_u64(splitmix64(key))
}
