//! Seeded random streams.
//!
//! ChaCha is a counter-mode generator: a 64-bit stream id selects a
//! separate keystream under the same key, so streams derived from one master
//! seed never overlap and any one of them can be replayed in isolation.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

pub type StreamRng = ChaCha12Rng;

pub fn seeded(seed: u64) -> StreamRng {
    StreamRng::seed_from_u64(seed)
}

/// Stream for replicate `replicate` of grid cell `cell`.
pub fn replicate_stream(master_seed: u64, cell: u32, replicate: u32) -> StreamRng {
    let mut rng = StreamRng::seed_from_u64(master_seed);
    rng.set_stream(((cell as u64) << 32) | replicate as u64);
    rng
}
