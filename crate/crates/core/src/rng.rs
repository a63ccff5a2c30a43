//! Deterministic random streams.
//!
//! Every consumer of randomness in an experiment gets its own ChaCha stream
//! derived from the experiment seed, so changing one component (a policy,
//! the learner, the noise level) never shifts the draws seen by another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Topology,
    Partition,
    TestSet,
    ModelInit,
    Environment,
    Scheduler,
    Oracle,
    Training { round: u64, client: usize },
    Noise { round: u64, client: usize },
}

impl Stream {
    fn id(self) -> u64 {
        // tag in the top byte, round in the middle, client in the low 24 bits
        let (tag, round, client) = match self {
            Stream::Topology => (1, 0, 0),
            Stream::Partition => (2, 0, 0),
            Stream::TestSet => (3, 0, 0),
            Stream::ModelInit => (4, 0, 0),
            Stream::Environment => (5, 0, 0),
            Stream::Scheduler => (6, 0, 0),
            Stream::Oracle => (7, 0, 0),
            Stream::Training { round, client } => (8, round, client as u64),
            Stream::Noise { round, client } => (9, round, client as u64),
        };
        (tag << 56) | ((round & 0xFFFF_FFFF) << 24) | (client & 0xFF_FFFF)
    }
}

pub fn stream(seed: u64, which: Stream) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(which.id());
    rng
}

/// Seed for the `index`-th independent run of a sweep or comparison.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    // splitmix64 finaliser
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
