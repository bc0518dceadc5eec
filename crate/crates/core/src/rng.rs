//! Deterministic random streams.
//!
//! All randomness in this crate flows through ChaCha12 generators keyed by a
//! user-supplied 64-bit seed. Independent substreams (one per Monte Carlo
//! trial) come from the cipher's stream parameter, so parallel trials never
//! share mutable generator state and trial `i` produces the same draws
//! regardless of how many worker threads run.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// Generator for substream `index` of the stream family keyed by `seed`.
pub fn stream(seed: u64, index: u64) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}
