//! Shared fixtures for the benchmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use mamab_fl::matching::RewardMatrix;
use mamab_fl::ExperimentConfig;

/// Uniform [0, 1) weights, reproducible from `seed`.
pub fn random_matrix(clients: usize, channels: usize, seed: u64) -> RewardMatrix {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..clients * channels).map(|_| r.random()).collect();
    RewardMatrix::new(clients, channels, data).expect("positive shape")
}

/// Default preset shortened to `rounds`, optionally without the learner.
pub fn preset(rounds: u64, learning: bool) -> ExperimentConfig {
    let mut c = ExperimentConfig {
        rounds,
        ..ExperimentConfig::default()
    };
    c.learning.enabled = learning;
    c
}
