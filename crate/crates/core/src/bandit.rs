//! Multi-agent bandit state and scheduling policies.
//!
//! Clients are agents and channels are arms. Each round the server scores
//! every client/channel pair as
//!
//! ```text
//! e_ij = Q_i + V * mean_ij + V * sqrt((U + 2) ln(s_i) / n_ij)
//! ```
//!
//! where `Q_i` is the client's virtual queue (its participation debt),
//! `n_ij` the number of times the pair was played and `s_i` the client's
//! total plays. The assignment is then the max-min matching of these scores,
//! except during the early exploration phase where, with probability
//! `exp(-t / T0)`, a uniformly random assignment is played instead.

use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::matching::{self, Assignment, RewardMatrix, UNEXPLORED};

/// Reward of a client that took `delay` seconds against a deadline `d_max`.
pub fn reward(delay: f64, d_max: f64) -> f64 {
    (1.0 - delay / d_max).max(0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Policy {
    MamabOm,
    MamabGmba,
    Random,
    RoundRobin,
    SingleUcb,
}

impl Policy {
    pub const ALL: [Policy; 5] = [
        Policy::MamabOm,
        Policy::MamabGmba,
        Policy::Random,
        Policy::RoundRobin,
        Policy::SingleUcb,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Policy::MamabOm => "mamab-om",
            Policy::MamabGmba => "mamab-gmba",
            Policy::Random => "random",
            Policy::RoundRobin => "round-robin",
            Policy::SingleUcb => "single-ucb",
        }
    }
}

impl std::fmt::Display for Policy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Policy {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        Policy::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| invalid(format!("unknown policy `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SchedulerConfig {
    /// Weight of the delay reward against the queue backlog.
    pub v: f64,
    /// Exploration time constant in rounds.
    pub t0: f64,
    pub policy: Policy,
    /// Exploration weight of the single-UCB baseline.
    pub single_ucb_c: f64,
}

impl Default for SchedulerConfig {
    fn default() -> Self {
        Self {
            v: 10.0,
            t0: 100.0,
            policy: Policy::MamabOm,
            single_ucb_c: 0.1,
        }
    }
}

impl SchedulerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.v >= 0.0) || !self.v.is_finite() {
            return Err(invalid(format!("V must be a finite non-negative number, got {}", self.v)));
        }
        if !(self.t0 > 0.0) {
            return Err(invalid(format!("T0 must be positive, got {}", self.t0)));
        }
        if !(self.single_ucb_c >= 0.0) {
            return Err(invalid("single-UCB coefficient must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BanditState {
    clients: usize,
    channels: usize,
    counts: Vec<u64>,
    sums: Vec<f64>,
    pub queues: Vec<f64>,
    pub round: u64,
}

impl BanditState {
    pub fn new(clients: usize, channels: usize) -> Self {
        Self {
            clients,
            channels,
            counts: vec![0; clients * channels],
            sums: vec![0.0; clients * channels],
            queues: vec![0.0; clients],
            round: 0,
        }
    }

    pub fn clients(&self) -> usize {
        self.clients
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn plays(&self, client: usize, channel: usize) -> u64 {
        self.counts[client * self.channels + channel]
    }

    pub fn reward_sum(&self, client: usize, channel: usize) -> f64 {
        self.sums[client * self.channels + channel]
    }

    /// Total plays `s_i` of a client over all channels.
    pub fn client_plays(&self, client: usize) -> u64 {
        self.counts[client * self.channels..(client + 1) * self.channels]
            .iter()
            .sum()
    }

    pub fn mean(&self, client: usize, channel: usize) -> Option<f64> {
        match self.plays(client, channel) {
            0 => None,
            n => Some(self.reward_sum(client, channel) / n as f64),
        }
    }

    /// Pooled mean reward of a client over all its channels.
    pub fn client_mean(&self, client: usize) -> Option<f64> {
        let s = self.client_plays(client);
        if s == 0 {
            return None;
        }
        let total: f64 = self.sums[client * self.channels..(client + 1) * self.channels]
            .iter()
            .sum();
        Some(total / s as f64)
    }

    /// `Q_i <- max(Q_i + beta_i - 1_i, 0)`.
    pub fn update_queues(&mut self, betas: &[f64], indicators: &[bool]) {
        for ((q, &b), &ok) in self.queues.iter_mut().zip(betas).zip(indicators) {
            *q = (*q + b - if ok { 1.0 } else { 0.0 }).max(0.0);
        }
    }

    /// Records the rewards of the matched pairs. `rewards[j]` belongs to the
    /// client on channel `j`.
    pub fn observe(&mut self, assignment: &Assignment, rewards: &[f64]) -> Result<()> {
        if rewards.len() != assignment.channels() {
            return Err(invalid("one reward per channel expected"));
        }
        if let Some(r) = rewards.iter().find(|r| !(0.0..=1.0).contains(*r)) {
            return Err(invalid(format!("reward {r} outside [0, 1]")));
        }
        for ((i, j), &r) in assignment.pairs().zip(rewards) {
            let k = i * self.channels + j;
            self.counts[k] += 1;
            self.sums[k] += r;
        }
        Ok(())
    }

    /// UCB score matrix. Pairs never played get [`UNEXPLORED`].
    pub fn estimated_rewards(&self, v: f64) -> RewardMatrix {
        let u = self.clients;
        let n = self.channels;
        let width = (u + 2) as f64;
        let mut data = Vec::with_capacity(u * n);
        for i in 0..u {
            let ln_s = (self.client_plays(i) as f64).ln();
            for j in 0..n {
                let plays = self.plays(i, j);
                data.push(if plays == 0 {
                    UNEXPLORED
                } else {
                    let mean = self.reward_sum(i, j) / plays as f64;
                    self.queues[i] + v * mean + v * (width * ln_s / plays as f64).sqrt()
                });
            }
        }
        RewardMatrix::new(u, n, data).expect("shape fixed at construction")
    }
}

/// Probability of playing a random assignment in round `t`.
pub fn exploration_probability(round: u64, t0: f64) -> f64 {
    (-(round as f64) / t0).exp()
}

/// Outcome of one scheduling decision.
#[derive(Debug, Clone, PartialEq)]
pub struct Decision {
    pub assignment: Assignment,
    /// `true` when the random exploration branch was taken.
    pub explored: bool,
}

/// Bandit scheduling step: exploration with probability `exp(-t / T0)`,
/// otherwise the max-min matching of the UCB scores.
///
/// `previous` is only used by the GMBA matcher.
pub fn select_assignment<R: Rng + ?Sized>(
    state: &BanditState,
    config: &SchedulerConfig,
    previous: Option<&Assignment>,
    rng: &mut R,
) -> Decision {
    let kappa: f64 = rng.random();
    let threshold = 1.0 - exploration_probability(state.round, config.t0);
    if kappa >= threshold {
        return Decision {
            assignment: matching::random_assignment(state.clients, state.channels, rng),
            explored: true,
        };
    }
    let scores = state.estimated_rewards(config.v);
    let assignment = match config.policy {
        Policy::MamabGmba => matching::gmba_step(&scores, previous, rng),
        _ => matching::optimal_matching(&scores),
    };
    Decision {
        assignment,
        explored: false,
    }
}

pub fn baseline_random<R: Rng + ?Sized>(clients: usize, channels: usize, rng: &mut R) -> Assignment {
    matching::random_assignment(clients, channels, rng)
}

/// Clients split into `ceil(U / N)` consecutive groups, one group per round.
/// The last group wraps around to the first clients.
pub fn baseline_round_robin(round: u64, clients: usize, channels: usize) -> Assignment {
    let groups = clients.div_ceil(channels) as u64;
    let g = (round % groups) as usize;
    let picked = (0..channels).map(|k| (g * channels + k) % clients).collect();
    Assignment::new(clients, picked).expect("consecutive clients are distinct")
}

/// Channel-agnostic UCB: rank clients by pooled mean plus
/// `c sqrt(2 ln t / s_i)`, take the top `N` and give them channels in random
/// order. Unplayed clients rank first.
pub fn baseline_single_ucb<R: Rng + ?Sized>(state: &BanditState, c: f64, rng: &mut R) -> Assignment {
    let ln_t = (state.round.max(1) as f64).ln();
    let index: Vec<f64> = (0..state.clients)
        .map(|i| match state.client_mean(i) {
            None => UNEXPLORED,
            Some(m) => m + c * (2.0 * ln_t / state.client_plays(i) as f64).sqrt(),
        })
        .collect();
    let mut order: Vec<usize> = (0..state.clients).collect();
    order.shuffle(rng);
    order.sort_by(|&a, &b| index[b].total_cmp(&index[a]));
    let mut picked: Vec<usize> = order[..state.channels].to_vec();
    picked.shuffle(rng);
    Assignment::new(state.clients, picked).expect("top-N clients are distinct")
}

/// Stateful wrapper that dispatches to the configured policy and remembers
/// the previous assignment.
#[derive(Debug, Clone)]
pub struct Scheduler {
    pub config: SchedulerConfig,
    previous: Option<Assignment>,
}

impl Scheduler {
    pub fn new(config: SchedulerConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            previous: None,
        })
    }

    pub fn next<R: Rng + ?Sized>(&mut self, state: &BanditState, rng: &mut R) -> Decision {
        let decision = match self.config.policy {
            Policy::MamabOm | Policy::MamabGmba => {
                select_assignment(state, &self.config, self.previous.as_ref(), rng)
            }
            Policy::Random => Decision {
                assignment: baseline_random(state.clients, state.channels, rng),
                explored: false,
            },
            Policy::RoundRobin => Decision {
                assignment: baseline_round_robin(state.round, state.clients, state.channels),
                explored: false,
            },
            Policy::SingleUcb => Decision {
                assignment: baseline_single_ucb(state, self.config.single_ucb_c, rng),
                explored: false,
            },
        };
        self.previous = Some(decision.assignment.clone());
        decision
    }
}
