//! Named random streams.
//!
//! Every random draw in the library comes from a ChaCha8 generator keyed by a
//! run seed, a [`Stream`] purpose and an index (trajectory, epoch, ...). The
//! generator is counter-based, so each `(seed, purpose, index)` triple yields
//! an independent sequence regardless of the order in which streams are
//! created. That is what makes parallel dataset generation and parallel
//! sweeps reproduce sequential ones bit for bit.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u32)]
pub enum Stream {
    CellInit = 1,
    ReadoutInit = 2,
    DecoderInit = 3,
    Trajectory = 4,
    Split = 5,
    Shuffle = 6,
    Rollout = 7,
    Evaluation = 8,
    Test = 9,
}

pub fn stream(seed: u64, purpose: Stream, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((purpose as u64) << 40) ^ index);
    rng
}
