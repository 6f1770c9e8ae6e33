//! Seed derivation.
//!
//! Every random stream in the simulator is keyed by
//! `(root seed, purpose tag, round, client)`, never by scheduling order, so
//! any component can be replayed in isolation and concurrent client training
//! stays bit-identical to the sequential order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Purpose tags for derived streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    Init = 1,
    Split = 2,
    Partition = 3,
    Synthetic = 4,
    Shuffle = 5,
    Dropout = 6,
    Gumbel = 7,
    GradCheck = 8,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes the root seed with a purpose tag and two indices.
pub fn derive(seed: u64, purpose: Purpose, round: u64, client: u64) -> u64 {
    let mut h = splitmix64(seed);
    for word in [purpose as u64, round, client] {
        h = splitmix64(h ^ word);
    }
    h
}

/// Further mixes an already-derived seed with one more index.
pub fn child(seed: u64, index: u64) -> u64 {
    splitmix64(seed ^ splitmix64(index.wrapping_add(0xA5A5_A5A5)))
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
