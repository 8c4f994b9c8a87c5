//! Seeded random streams. Every experiment derives independent ChaCha8
//! substreams from `(base_seed, purpose, trial)` so campaigns are
//! reproducible regardless of thread scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Purpose {
    Scene = 1,
    Policy = 2,
    Orchestrator = 3,
}

/// Seed layout: bytes 0..8 base seed (LE), 8..16 purpose tag (LE), rest zero.
/// The trial index selects the ChaCha stream.
pub fn substream(base_seed: u64, purpose: Purpose, trial: u64) -> ChaCha8Rng {
    let mut seed = [0u8; 32];
    seed[..8].copy_from_slice(&base_seed.to_le_bytes());
    seed[8..16].copy_from_slice(&(purpose as u64).to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(seed);
    rng.set_stream(trial);
    rng
}

/// Stable 64-bit mix (splitmix64 finalizer) for deterministic picks
/// that should not consume a stream.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
