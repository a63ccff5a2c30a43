use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{EnvMode, ExperimentConfig, InterferenceConfig, OracleNoise};
use crate::bandit::{reward, BanditState, Policy, Scheduler};
use crate::env::{self, ChannelParams, ClientComputeProfile, Topology};
use crate::error::{invalid, Result};
use crate::fl::{self, Model, Partition};
use crate::matching::{min_matched_edge, Assignment, RewardMatrix};
use crate::privacy::{divergence_bound, noise_std, participating_ratios, DivergenceInputs, PrivacyLedger};
use crate::rng::{derive_seed, stream, SimRng, Stream};

/// Everything observed in one round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundMetrics {
    /// 1-based round index.
    pub t: u64,
    pub delay_s: f64,
    pub cum_delay_s: f64,
    /// Smallest matched reward. In oracle mode this is the smallest true mean
    /// of the chosen assignment.
    pub min_reward: f64,
    pub accuracy: Option<f64>,
    pub loss: Option<f64>,
    pub assignment: Assignment,
    pub explored: bool,
    pub indicators: Vec<bool>,
    /// Virtual queues this round's schedule was computed from.
    pub queues: Vec<f64>,
    /// Fraction of rounds so far in which each client uploaded on time.
    pub selection_fraction: Vec<f64>,
    pub eps_bar: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOutput {
    pub config: ExperimentConfig,
    pub betas: Vec<f64>,
    /// Divergence bounds; absent when the ratios were overridden.
    pub thetas: Option<Vec<f64>>,
    pub sigmas: Vec<f64>,
    pub model_bits: u64,
    pub metrics: Vec<RoundMetrics>,
    pub warnings: Vec<String>,
}

impl RunOutput {
    pub fn last(&self) -> &RoundMetrics {
        self.metrics.last().expect("at least one round")
    }

    pub fn cum_delay(&self) -> f64 {
        self.last().cum_delay_s
    }
}

struct Physical {
    params: ChannelParams,
    topology: Topology,
    profiles: Vec<ClientComputeProfile>,
}

fn physical_setup(config: &ExperimentConfig, sizes: &[usize]) -> Result<Physical> {
    let (u, n) = (config.clients, config.channels);
    let w = &config.wireless;
    let mut rng = stream(config.seed, Stream::Topology);
    let topology = Topology::random(u, w.area_side_m, &mut rng)?;
    let noise = config.noise_w();
    let (up, down) = match &w.interference {
        InterferenceConfig::Explicit { up, down } => (up.clone(), down.clone()),
        InterferenceConfig::Random {
            max_to_noise_up,
            max_to_noise_down,
        } => {
            let mut table = |scale: f64| -> Vec<Vec<f64>> {
                (0..u)
                    .map(|_| (0..n).map(|_| rng.random::<f64>() * scale * noise).collect())
                    .collect()
            };
            let up = table(*max_to_noise_up);
            (up, table(*max_to_noise_down))
        }
    };
    let params = ChannelParams {
        uplink_bandwidth_hz: w.bandwidth_up_hz,
        downlink_bandwidth_hz: w.bandwidth_down_hz,
        client_tx_power_dbm: w.client_tx_dbm,
        bs_tx_power_dbm: w.bs_tx_dbm,
        noise_power_dbm: w.noise_dbm,
        interference_up: up,
        interference_down: down,
    };
    params.validate(u, n)?;
    let profiles = w
        .cpu
        .ranges(u)?
        .into_iter()
        .zip(sizes)
        .map(|(range, &size)| ClientComputeProfile {
            cycles_per_sample: w.cycles_per_sample,
            dataset_size: size,
            cpu_freq_range: range,
        })
        .collect();
    Ok(Physical {
        params,
        topology,
        profiles,
    })
}

fn thetas(config: &ExperimentConfig, partition: &Partition) -> Result<Vec<f64>> {
    let l = &config.learning;
    let global = partition.global_class_ratios();
    let budgets = config.privacy.budgets(config.clients)?;
    (0..config.clients)
        .map(|i| {
            let inputs = DivergenceInputs {
                class_ratios: partition.class_ratios(i),
                global_class_ratios: global.clone(),
                learning_rate: l.learning_rate,
                clip: l.clip,
                lambda_max: l.lambda_max,
                local_steps: l.local_steps,
                batch_size: l.batch_size,
                dataset_size: partition.clients[i].len(),
            };
            divergence_bound(&inputs, budgets[i])
        })
        .collect()
}

fn oracle_reward(mean: f64, noise: OracleNoise, rng: &mut SimRng) -> f64 {
    match noise {
        OracleNoise::Bernoulli => f64::from(u8::from(rng.random::<f64>() < mean)),
        OracleNoise::Gaussian { std } => {
            let z: f64 = StandardNormal.sample(rng);
            (mean + std * z).clamp(0.0, 1.0)
        }
    }
}

/// Rounds to a multiple of 2^-20 s so that cumulative sums are exact.
fn quantize(seconds: f64) -> f64 {
    const SCALE: f64 = (1u64 << 20) as f64;
    (seconds * SCALE).round() / SCALE
}

/// Runs one experiment. The result depends only on the config (seed included).
pub fn run_experiment(config: &ExperimentConfig) -> Result<RunOutput> {
    config.validate()?;
    let (u, n) = (config.clients, config.channels);
    let seed = config.seed;
    let l = &config.learning;
    let mut warnings = Vec::new();

    let sizes = l.sizes(u)?;
    let blobs = l.blobs();
    let partition = fl::partition_synthetic(&blobs, &sizes, l.gamma, &mut stream(seed, Stream::Partition))?;

    let (betas, thetas) = match &config.beta_override {
        Some(b) => (b.clone(), None),
        None => {
            let th = thetas(config, &partition)?;
            (participating_ratios(&th, n), Some(th))
        }
    };
    let demand: f64 = betas.iter().sum();
    if demand > n as f64 + 1e-9 {
        let msg = format!("participating ratios sum to {demand:.4} > {n} channels; queues cannot all be stable");
        log::warn!("{msg}");
        warnings.push(msg);
    }

    let budgets = config.privacy.budgets(u)?;
    let train_cfg = l.train();
    let sigmas = budgets
        .iter()
        .map(|&p| noise_std(p, l.learning_rate, l.clip, l.local_steps, l.batch_size))
        .collect::<Result<Vec<_>>>()?;
    let mut ledger = PrivacyLedger::new(budgets, sigmas.clone());

    let mut global = Model::random(l.classes, l.features, l.init_scale, &mut stream(seed, Stream::ModelInit));
    let model_bits = fl::model_size_bits(&global);
    let test = l
        .enabled
        .then(|| blobs.test_set(l.test_samples, &mut stream(seed, Stream::TestSet)));

    let physical = match &config.mode {
        EnvMode::Physical => Some(physical_setup(config, &sizes)?),
        EnvMode::Oracle { .. } => None,
    };
    let oracle = match &config.mode {
        EnvMode::Oracle { means, noise } => Some((RewardMatrix::from_rows(means)?, *noise)),
        EnvMode::Physical => None,
    };

    let mut env_rng = stream(seed, Stream::Environment);
    let mut sched_rng = stream(seed, Stream::Scheduler);
    let mut oracle_rng = stream(seed, Stream::Oracle);
    let mut scheduler = Scheduler::new(config.scheduler())?;
    let mut state = BanditState::new(u, n);
    let mut successes = vec![0u64; u];
    let mut previous = vec![false; u];
    let mut cum_delay = 0.0;
    let mut metrics = Vec::with_capacity(config.rounds as usize);

    for t in 1..=config.rounds {
        state.round = t;
        state.update_queues(&betas, &previous);
        let decision = scheduler.next(&state, &mut sched_rng);
        let assignment = decision.assignment;

        let (outcome, rewards, min_reward) = match (&physical, &oracle) {
            (Some(ph), _) => {
                let round_env = env::sample_round(&ph.params, &ph.topology, &ph.profiles, &mut env_rng);
                let train_delays = ph
                    .profiles
                    .iter()
                    .zip(&round_env.cpu_hz)
                    .map(|(p, &f)| env::compute_delay(l.local_steps, p.dataset_size, p.cycles_per_sample, f))
                    .collect::<Result<Vec<_>>>()?;
                let outcome = env::round_delays(
                    &ph.params,
                    &round_env,
                    &assignment,
                    model_bits,
                    model_bits,
                    &train_delays,
                    config.d_max,
                )?;
                let rewards: Vec<f64> = assignment
                    .pairs()
                    .map(|(i, _)| reward(outcome.client_delay[i].expect("matched"), config.d_max))
                    .collect();
                let min_reward = rewards.iter().copied().fold(f64::INFINITY, f64::min);
                (outcome, rewards, min_reward)
            }
            (None, Some((means, noise))) => {
                // draw every pair so the stream does not depend on the policy
                let draws: Vec<f64> = (0..u * n)
                    .map(|k| oracle_reward(means.get(k / n, k % n), *noise, &mut oracle_rng))
                    .collect();
                let rewards: Vec<f64> = assignment.pairs().map(|(i, j)| draws[i * n + j]).collect();
                let matched: Vec<(usize, f64)> = assignment
                    .pairs()
                    .zip(&rewards)
                    .map(|((i, _), r)| (i, (1.0 - r) * config.d_max))
                    .collect();
                let outcome = env::assemble_round(u, &matched, config.d_max);
                (outcome, rewards, min_matched_edge(means, &assignment)?)
            }
            (None, None) => unreachable!("mode is either physical or oracle"),
        };

        let mut evaluation = None;
        if let Some(test) = &test {
            let mut uploads = Vec::new();
            let mut weights = Vec::new();
            for (i, _) in assignment.pairs() {
                if !outcome.indicators[i] {
                    continue;
                }
                let mut train_rng = stream(seed, Stream::Training { round: t, client: i });
                let local = fl::local_train(&global, &partition.clients[i], &train_cfg, &mut train_rng)?;
                let mut noise_rng = stream(seed, Stream::Noise { round: t, client: i });
                uploads.push(fl::perturb(&local, sigmas[i], &mut noise_rng)?);
                weights.push(sizes[i]);
            }
            if !uploads.is_empty() {
                let refs: Vec<&Model> = uploads.iter().collect();
                global = fl::aggregate(&refs, &weights)?;
            }
            evaluation = Some(fl::evaluate(&global, test));
        }

        ledger.record_upload(&outcome.indicators);
        state.observe(&assignment, &rewards)?;
        for (s, &ok) in successes.iter_mut().zip(&outcome.indicators) {
            *s += u64::from(ok);
        }
        let delay = quantize(outcome.round_delay);
        cum_delay += delay;

        previous.clone_from(&outcome.indicators);
        metrics.push(RoundMetrics {
            t,
            delay_s: delay,
            cum_delay_s: cum_delay,
            min_reward,
            accuracy: evaluation.map(|e| e.accuracy),
            loss: evaluation.map(|e| e.loss),
            assignment,
            explored: decision.explored,
            indicators: outcome.indicators,
            queues: state.queues.clone(),
            selection_fraction: successes.iter().map(|&s| s as f64 / t as f64).collect(),
            eps_bar: ledger.leakage.clone(),
        });
    }

    Ok(RunOutput {
        config: config.clone(),
        betas,
        thetas,
        sigmas,
        model_bits,
        metrics,
        warnings,
    })
}

/// Parameters a sweep can vary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepParam {
    V,
    T0,
    Epsilon,
    DMax,
    Gamma,
    Rounds,
}

impl std::str::FromStr for SweepParam {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "v" => SweepParam::V,
            "t0" => SweepParam::T0,
            "epsilon" | "eps" => SweepParam::Epsilon,
            "d-max" | "dmax" => SweepParam::DMax,
            "gamma" => SweepParam::Gamma,
            "rounds" | "t" => SweepParam::Rounds,
            other => return Err(invalid(format!("unknown sweep parameter {other:?}"))),
        })
    }
}

impl SweepParam {
    pub fn apply(self, config: &mut ExperimentConfig, value: f64) -> Result<()> {
        use super::config::PrivacyConfig;
        match self {
            SweepParam::V => config.v = value,
            SweepParam::T0 => config.t0 = value,
            SweepParam::DMax => config.d_max = value,
            SweepParam::Gamma => config.learning.gamma = value,
            SweepParam::Rounds => {
                if value < 1.0 || value.fract() != 0.0 {
                    return Err(invalid(format!("rounds must be a positive integer, got {value}")));
                }
                config.rounds = value as u64;
            }
            SweepParam::Epsilon => {
                let delta = match &config.privacy {
                    PrivacyConfig::Uniform { delta, .. } | PrivacyConfig::NonUniform { delta } => *delta,
                    PrivacyConfig::PerClient { delta, .. } => delta[0],
                };
                config.privacy = PrivacyConfig::Uniform { epsilon: value, delta };
            }
        }
        config.validate()
    }
}

/// Runs `configs` in parallel; run `k` gets the seed derived from the base
/// seed and `k`.
fn run_all(mut configs: Vec<ExperimentConfig>) -> Result<Vec<RunOutput>> {
    for (k, c) in configs.iter_mut().enumerate() {
        c.seed = derive_seed(c.seed, k as u64);
    }
    configs.par_iter().map(run_experiment).collect()
}

pub fn sweep(base: &ExperimentConfig, param: SweepParam, values: &[f64]) -> Result<Vec<RunOutput>> {
    let configs = values
        .iter()
        .map(|&v| {
            let mut c = base.clone();
            param.apply(&mut c, v)?;
            Ok(c)
        })
        .collect::<Result<Vec<_>>>()?;
    run_all(configs)
}

pub fn compare(base: &ExperimentConfig, policies: &[Policy]) -> Result<Vec<RunOutput>> {
    let configs = policies
        .iter()
        .map(|&p| ExperimentConfig {
            policy: p,
            ..base.clone()
        })
        .collect();
    run_all(configs)
}
