use serde::{Deserialize, Serialize};

use crate::bandit::{Policy, SchedulerConfig};
use crate::env::dbm_to_watts;
use crate::error::{invalid, Result};
use crate::fl::{BlobSpec, TrainConfig};
use crate::matching::RewardMatrix;
use crate::privacy::{non_uniform_budgets, PrivacyParams};

/// Full description of one experiment. Every field has a default so a config
/// file only needs to list what it changes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub clients: usize,
    pub channels: usize,
    pub rounds: u64,
    pub seed: u64,
    /// Round deadline in seconds.
    pub d_max: f64,
    pub policy: Policy,
    pub v: f64,
    pub t0: f64,
    pub single_ucb_c: f64,
    /// Precision of the matching solver, used by the regret bound.
    pub matching_precision: f64,
    /// Fixed participating ratios instead of the ones derived from the
    /// divergence bound.
    pub beta_override: Option<Vec<f64>>,
    pub privacy: PrivacyConfig,
    pub learning: LearningConfig,
    pub wireless: WirelessConfig,
    pub mode: EnvMode,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            clients: 10,
            channels: 4,
            rounds: 2000,
            seed: 0,
            d_max: 5.0,
            policy: Policy::MamabOm,
            v: 10.0,
            t0: 100.0,
            single_ucb_c: 0.1,
            matching_precision: 0.0,
            beta_override: None,
            privacy: PrivacyConfig::default(),
            learning: LearningConfig::default(),
            wireless: WirelessConfig::default(),
            mode: EnvMode::Physical,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PrivacyConfig {
    /// Same budget for every client.
    Uniform { epsilon: f64, delta: f64 },
    /// `eps_i = 5 * (floor((i - 1) / 2) + 3)` for 1-based `i`.
    NonUniform { delta: f64 },
    PerClient { epsilon: Vec<f64>, delta: Vec<f64> },
}

impl Default for PrivacyConfig {
    fn default() -> Self {
        PrivacyConfig::Uniform {
            epsilon: 25.0,
            delta: 1e-3,
        }
    }
}

impl PrivacyConfig {
    pub fn budgets(&self, clients: usize) -> Result<Vec<PrivacyParams>> {
        let out = match self {
            PrivacyConfig::Uniform { epsilon, delta } => vec![PrivacyParams::new(*epsilon, *delta)?; clients],
            PrivacyConfig::NonUniform { delta } => non_uniform_budgets(clients, *delta),
            PrivacyConfig::PerClient { epsilon, delta } => {
                if epsilon.len() != clients || delta.len() != clients {
                    return Err(invalid(format!("per-client privacy needs {clients} entries")));
                }
                epsilon
                    .iter()
                    .zip(delta)
                    .map(|(&e, &d)| PrivacyParams::new(e, d))
                    .collect::<Result<_>>()?
            }
        };
        for p in &out {
            p.validate()?;
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LearningConfig {
    /// Train and evaluate the model. Delays and scheduling do not depend on it.
    pub enabled: bool,
    pub classes: usize,
    pub features: usize,
    pub separation: f64,
    /// Non-IID degree.
    pub gamma: f64,
    pub samples_per_client: usize,
    /// Per-client dataset sizes; overrides `samples_per_client`.
    pub dataset_sizes: Option<Vec<usize>>,
    pub test_samples: usize,
    pub learning_rate: f64,
    pub clip: f64,
    /// Local SGD steps per round.
    pub local_steps: u32,
    pub batch_size: usize,
    pub lambda_max: f64,
    pub init_scale: f64,
}

impl Default for LearningConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            classes: 4,
            features: 8,
            separation: 3.0,
            gamma: 0.8,
            samples_per_client: 600,
            dataset_sizes: None,
            test_samples: 1000,
            learning_rate: 0.1,
            clip: 1.0,
            local_steps: 5,
            batch_size: 10,
            lambda_max: 1.0,
            init_scale: 0.01,
        }
    }
}

impl LearningConfig {
    pub fn sizes(&self, clients: usize) -> Result<Vec<usize>> {
        match &self.dataset_sizes {
            Some(s) if s.len() != clients => Err(invalid(format!("dataset_sizes needs {clients} entries"))),
            Some(s) => Ok(s.clone()),
            None => Ok(vec![self.samples_per_client; clients]),
        }
    }

    pub fn blobs(&self) -> BlobSpec {
        BlobSpec {
            classes: self.classes,
            features: self.features,
            separation: self.separation,
        }
    }

    pub fn train(&self) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rate,
            clip: self.clip,
            local_steps: self.local_steps,
            batch_size: self.batch_size,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WirelessConfig {
    pub area_side_m: f64,
    pub bandwidth_up_hz: f64,
    pub bandwidth_down_hz: f64,
    pub client_tx_dbm: f64,
    pub bs_tx_dbm: f64,
    pub noise_dbm: f64,
    pub interference: InterferenceConfig,
    pub cycles_per_sample: f64,
    pub cpu: CpuConfig,
}

impl Default for WirelessConfig {
    fn default() -> Self {
        Self {
            area_side_m: 2000.0,
            bandwidth_up_hz: 15e3,
            bandwidth_down_hz: 15e3,
            client_tx_dbm: 23.0,
            bs_tx_dbm: 23.0,
            noise_dbm: -107.0,
            interference: InterferenceConfig::default(),
            cycles_per_sample: 20.0,
            cpu: CpuConfig::default(),
        }
    }
}

/// Mean interference power per client/channel/direction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum InterferenceConfig {
    /// Each pair's mean drawn once per experiment, uniform in
    /// `[0, max_to_noise * noise_power]`.
    Random { max_to_noise_up: f64, max_to_noise_down: f64 },
    /// Explicit `clients x channels` tables in watts.
    Explicit { up: Vec<Vec<f64>>, down: Vec<Vec<f64>> },
}

impl Default for InterferenceConfig {
    fn default() -> Self {
        InterferenceConfig::Random {
            max_to_noise_up: 20.0,
            max_to_noise_down: 10.0,
        }
    }
}

/// CPU frequency range per client.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum CpuConfig {
    /// Client `i` (1-based) draws uniformly from
    /// `[lo_slope * i + lo_offset, hi_slope * i + hi_offset]` Hz.
    Linear {
        lo_slope_hz: f64,
        lo_offset_hz: f64,
        hi_slope_hz: f64,
        hi_offset_hz: f64,
    },
    Explicit { ranges_hz: Vec<(f64, f64)> },
}

impl Default for CpuConfig {
    fn default() -> Self {
        CpuConfig::Linear {
            lo_slope_hz: 10e3,
            lo_offset_hz: 10e3,
            hi_slope_hz: 100e3,
            hi_offset_hz: 30e3,
        }
    }
}

impl CpuConfig {
    pub fn ranges(&self, clients: usize) -> Result<Vec<(f64, f64)>> {
        match self {
            CpuConfig::Linear {
                lo_slope_hz,
                lo_offset_hz,
                hi_slope_hz,
                hi_offset_hz,
            } => Ok((1..=clients)
                .map(|i| {
                    let i = i as f64;
                    (lo_slope_hz * i + lo_offset_hz, hi_slope_hz * i + hi_offset_hz)
                })
                .collect()),
            CpuConfig::Explicit { ranges_hz } if ranges_hz.len() == clients => Ok(ranges_hz.clone()),
            CpuConfig::Explicit { .. } => Err(invalid(format!("cpu ranges need {clients} entries"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum EnvMode {
    /// Delays from the radio and compute models; true means unknown.
    Physical,
    /// Rewards drawn around a known `clients x channels` mean matrix. The
    /// reported delay of a pair is `(1 - reward) * d_max`.
    Oracle {
        means: Vec<Vec<f64>>,
        #[serde(default)]
        noise: OracleNoise,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum OracleNoise {
    /// Reward is 1 with probability `mu`, else 0.
    #[default]
    Bernoulli,
    /// `mu + N(0, std^2)` clamped to `[0, 1]`.
    Gaussian { std: f64 },
}

impl ExperimentConfig {
    /// The default preset with the shorter 2 s deadline.
    pub fn short_deadline() -> Self {
        Self {
            d_max: 2.0,
            ..Self::default()
        }
    }

    pub fn scheduler(&self) -> SchedulerConfig {
        SchedulerConfig {
            v: self.v,
            t0: self.t0,
            policy: self.policy,
            single_ucb_c: self.single_ucb_c,
        }
    }

    pub fn oracle_means(&self) -> Option<Result<RewardMatrix>> {
        match &self.mode {
            EnvMode::Oracle { means, .. } => Some(RewardMatrix::from_rows(means)),
            EnvMode::Physical => None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let c: Self = serde_json::from_str(text)?;
        c.validate()?;
        Ok(c)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        let (u, n) = (self.clients, self.channels);
        if n == 0 || u < n {
            return Err(invalid(format!("need clients >= channels >= 1, got {u} and {n}")));
        }
        if self.rounds == 0 {
            return Err(invalid("rounds must be at least 1"));
        }
        if !(self.d_max > 0.0) || !self.d_max.is_finite() {
            return Err(invalid("d_max must be positive"));
        }
        if !(self.matching_precision >= 0.0) {
            return Err(invalid("matching precision must be non-negative"));
        }
        self.scheduler().validate()?;
        self.privacy.budgets(u)?;
        if let Some(b) = &self.beta_override {
            if b.len() != u || b.iter().any(|x| !(0.0..=1.0).contains(x)) {
                return Err(invalid(format!("beta_override needs {u} values in [0, 1]")));
            }
        }

        let l = &self.learning;
        l.blobs().validate()?;
        l.train().validate()?;
        if !(0.0..=1.0).contains(&l.gamma) || l.sizes(u)?.contains(&0) || l.test_samples == 0 {
            return Err(invalid("learning: gamma in [0, 1], positive dataset and test sizes required"));
        }
        if !(l.lambda_max >= 0.0) {
            return Err(invalid("lambda_max must be non-negative"));
        }

        let w = &self.wireless;
        for (name, x) in [
            ("area_side_m", w.area_side_m),
            ("bandwidth_up_hz", w.bandwidth_up_hz),
            ("bandwidth_down_hz", w.bandwidth_down_hz),
            ("cycles_per_sample", w.cycles_per_sample),
        ] {
            if !(x > 0.0) || !x.is_finite() {
                return Err(invalid(format!("{name} must be positive")));
            }
        }
        match &w.interference {
            InterferenceConfig::Random {
                max_to_noise_up,
                max_to_noise_down,
            } => {
                if !(*max_to_noise_up >= 0.0 && *max_to_noise_down >= 0.0) {
                    return Err(invalid("interference scales must be non-negative"));
                }
            }
            InterferenceConfig::Explicit { up, down } => {
                for t in [up, down] {
                    if t.len() != u || t.iter().any(|r| r.len() != n || r.iter().any(|x| !(*x >= 0.0))) {
                        return Err(invalid(format!("interference tables must be {u}x{n} and non-negative")));
                    }
                }
            }
        }
        for (lo, hi) in w.cpu.ranges(u)? {
            if !(lo > 0.0 && lo <= hi) {
                return Err(invalid("cpu ranges need 0 < lo <= hi"));
            }
        }

        if let EnvMode::Oracle { means, noise } = &self.mode {
            if means.len() != u || means.iter().any(|r| r.len() != n || r.iter().any(|x| !(0.0..=1.0).contains(x))) {
                return Err(invalid(format!("oracle means must be {u}x{n} with entries in [0, 1]")));
            }
            if let OracleNoise::Gaussian { std } = noise {
                if !(*std >= 0.0) {
                    return Err(invalid("oracle noise std must be non-negative"));
                }
            }
        }
        Ok(())
    }

    pub fn noise_w(&self) -> f64 {
        dbm_to_watts(self.wireless.noise_dbm)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trips_through_json() {
        let c = ExperimentConfig::default();
        c.validate().unwrap();
        let back = ExperimentConfig::from_json(&c.to_json().unwrap()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn partial_config_fills_defaults() {
        let c = ExperimentConfig::from_json(r#"{"v": 100, "policy": "mamab-gmba", "privacy": {"kind": "non-uniform", "delta": 0.001}}"#).unwrap();
        assert_eq!(c.v, 100.0);
        assert_eq!(c.policy, Policy::MamabGmba);
        assert_eq!(c.clients, 10);
        assert_eq!(c.privacy.budgets(10).unwrap()[9].epsilon, 35.0);
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(ExperimentConfig::from_json(r#"{"bogus": 1}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"clients": 3, "channels": 4}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"rounds": 0}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"clients": 2, "channels": 1, "mode": {"kind": "oracle", "means": [[0.5], [1.5]]}}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"beta_override": [0.1]}"#).is_err());
    }

    #[test]
    fn cpu_ranges_follow_client_index() {
        let r = CpuConfig::default().ranges(10).unwrap();
        assert_eq!(r[0], (20e3, 130e3));
        assert_eq!(r[9], (110e3, 1030e3));
    }
}
