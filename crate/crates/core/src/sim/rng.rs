//! Seeded ChaCha8 substreams.
//!
//! Every random quantity in a simulation comes from `stream(seed, s)`: stream
//! 0 draws the design coefficients and stream `r + 1` drives replication `r`,
//! so results do not depend on how replications are scheduled.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const DESIGN_STREAM: u64 = 0;

/// Mixed into the master seed for bootstrap resampling streams.
pub const BOOTSTRAP_SALT: u64 = 0x9E37_79B9_7F4A_7C15;

pub fn stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn replication(seed: u64, rep: usize) -> ChaCha8Rng {
    stream(seed, rep as u64 + 1)
}
