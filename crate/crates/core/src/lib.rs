//! Client scheduling for federated learning over interference-limited
//! wireless channels.
//!
//! The crate is organised bottom-up:
//!
//! * [`env`] models the radio and compute environment and turns a channel
//!   assignment into per-client delays.
//! * [`privacy`] calibrates Gaussian noise for local differential privacy,
//!   composes leakage over uploads and derives per-client participating
//!   ratios from the model-divergence bound.
//! * [`matching`] solves the per-round max-min (bottleneck) bipartite
//!   matching, exactly by pruning and greedily by random orders.
//! * [`bandit`] keeps the multi-agent bandit state (virtual queues, play
//!   counts, UCB estimates) and implements the scheduling policies.
//! * [`fl`] is a small softmax-regression federated learner on synthetic
//!   non-IID data.
//! * [`harness`] wires everything into an experiment loop, computes regret
//!   against known means and writes CSV/JSON results.

// `!(x > 0.0)` is how validation rejects NaN alongside out-of-range values
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bandit;
pub mod env;
mod error;
pub mod fl;
pub mod harness;
pub mod matching;
pub mod privacy;
pub mod rng;

pub use bandit::{BanditState, Policy, SchedulerConfig};
pub use env::{ChannelParams, ClientComputeProfile, RoundEnvironment, Topology};
pub use error::{Error, Result};
pub use fl::{Model, Partition, TrainConfig};
pub use harness::{ExperimentConfig, RegretReport, RoundMetrics, RunOutput};
pub use matching::{Assignment, RewardMatrix};
pub use privacy::{PrivacyLedger, PrivacyParams};
