//! Seed splitting.
//!
//! A master seed expands to a ChaCha8 key with `SeedableRng::seed_from_u64`;
//! each consumer draws from its own ChaCha stream number under that key. Streams
//! are independent and adding a consumer never perturbs the others.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Random-number consumers within one run.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    WeightInit = 1,
    ListSelection = 2,
    Shuffle = 3,
}

pub fn substream(master: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(stream as u64);
    rng
}
