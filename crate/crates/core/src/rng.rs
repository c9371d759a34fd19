//! Counter-style random streams: every (seed, realization, trajectory)
//! triple has its own independent ChaCha stream, so results do not depend
//! on scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Trajectory index reserved for per-realization draws such as detunings.
pub const REALIZATION_STREAM: u32 = u32::MAX;

pub fn stream_rng(seed: u64, realization: u32, trajectory: u32) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((u64::from(realization) << 32) | u64::from(trajectory));
    rng
}
