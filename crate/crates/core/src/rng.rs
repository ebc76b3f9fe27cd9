//! Seeded random streams.
//!
//! All randomness is drawn from ChaCha8 generators. A master seed fixes the
//! key; each consumer gets its own 64-bit stream id built from a [`Stream`]
//! domain tag (high 16 bits) and an index (low 48 bits), so trials can run in
//! any order or in parallel and still see identical draws.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u16)]
pub enum Stream {
    GroundTruth = 1,
    TrainingData = 2,
    Schedule = 3,
    MonteCarlo = 4,
    Topology = 5,
    Evidence = 6,
    Fixture = 7,
}

pub fn stream(master_seed: u64, domain: Stream, index: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(((domain as u64) << 48) | (index & 0xFFFF_FFFF_FFFF));
    rng
}
