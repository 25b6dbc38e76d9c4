//! Seeded random streams.
//!
//! Every random consumer draws from a ChaCha8 generator keyed by the user
//! seed and a 64-bit stream id. ChaCha is counter based, so distinct stream
//! ids give independent sequences that do not depend on which thread runs
//! them. Stream ids used in this crate:
//!
//! * `0`: a single chain, a coupled pair, or a one-off exact sample.
//! * `r + 1`: replica `r` of a replicated experiment.
//! * `(node << 32) | rep`: Monte Carlo repetition `rep` at quadrature node
//!   `node` of the variance identity estimate.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

pub fn stream(seed: u64, stream_id: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream_id);
    rng
}

pub fn replica_stream(seed: u64, replica: usize) -> StreamRng {
    stream(seed, replica as u64 + 1)
}
