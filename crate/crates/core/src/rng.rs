//! Counter-keyed deterministic random streams.
//!
//! Every random decision in the library is drawn from a ChaCha stream fully
//! determined by `(seed, stream)`, so runs reproduce exactly under any
//! parallel schedule.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Returns the generator for stream `stream` of the given seed.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
