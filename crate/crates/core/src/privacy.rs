//! Local differential privacy bookkeeping.
//!
//! Each client perturbs its uploaded model with Gaussian noise calibrated to
//! its own `(epsilon, delta)` target. Leakage composes over uploads as
//! `eps_bar = eps * sqrt(E ln(1/delta) / ln(2/delta))`.
//!
//! The same budget feeds the model-divergence bound `theta_i`, and the
//! inverse divergences, normalised over clients and scaled by the channel
//! count, give the participating ratio each client must sustain.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Divergence used in place of zero before inverting.
pub const THETA_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrivacyParams {
    pub epsilon: f64,
    pub delta: f64,
}

impl PrivacyParams {
    pub fn new(epsilon: f64, delta: f64) -> Result<Self> {
        let p = Self { epsilon, delta };
        p.validate()?;
        Ok(p)
    }

    /// `epsilon = +inf` is accepted and means "no privacy".
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) {
            return Err(invalid(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(invalid(format!("delta must lie in (0, 1), got {}", self.delta)));
        }
        Ok(())
    }
}

/// Per-client budgets where client `i` (1-based) gets
/// `eps_i = 5 * (floor((i - 1) / 2) + 3)`.
pub fn non_uniform_budgets(clients: usize, delta: f64) -> Vec<PrivacyParams> {
    (0..clients)
        .map(|i| PrivacyParams {
            epsilon: 5.0 * ((i / 2) as f64 + 3.0),
            delta,
        })
        .collect()
}

/// L2 sensitivity of `tau` clipped SGD steps: `2 eta C tau / b`.
pub fn sensitivity(learning_rate: f64, clip: f64, local_steps: u32, batch_size: usize) -> f64 {
    2.0 * learning_rate * clip * local_steps as f64 / batch_size as f64
}

/// Gaussian-mechanism noise scale `sensitivity * sqrt(2 ln(1.25/delta)) / eps`.
pub fn noise_std(
    params: PrivacyParams,
    learning_rate: f64,
    clip: f64,
    local_steps: u32,
    batch_size: usize,
) -> Result<f64> {
    params.validate()?;
    if batch_size == 0 {
        return Err(invalid("batch size must be positive"));
    }
    let s = sensitivity(learning_rate, clip, local_steps, batch_size);
    Ok(s * (2.0 * (1.25 / params.delta).ln()).sqrt() / params.epsilon)
}

/// Leakage after `uploads` perturbed uploads.
pub fn compose_leakage(params: PrivacyParams, uploads: u64) -> f64 {
    let d = params.delta;
    (uploads as f64 * (1.0 / d).ln() / (2.0 / d).ln()).sqrt() * params.epsilon
}

/// Everything the divergence bound needs about one client.
#[derive(Debug, Clone, PartialEq)]
pub struct DivergenceInputs {
    /// Class ratios `p_{i,m}` of this client.
    pub class_ratios: Vec<f64>,
    /// Class ratios `q_m` over all clients.
    pub global_class_ratios: Vec<f64>,
    pub learning_rate: f64,
    pub clip: f64,
    pub lambda_max: f64,
    pub local_steps: u32,
    pub batch_size: usize,
    pub dataset_size: usize,
}

impl DivergenceInputs {
    pub fn sampling_rate(&self) -> f64 {
        self.batch_size as f64 / self.dataset_size as f64
    }

    pub fn validate(&self) -> Result<()> {
        if self.class_ratios.len() != self.global_class_ratios.len() || self.class_ratios.is_empty() {
            return Err(invalid("class ratio vectors must be non-empty and equally long"));
        }
        for (name, v) in [("client", &self.class_ratios), ("global", &self.global_class_ratios)] {
            let s: f64 = v.iter().sum();
            if (s - 1.0).abs() > 1e-9 || v.iter().any(|&p| p < 0.0) {
                return Err(invalid(format!("{name} class ratios must form a distribution (sum {s})")));
            }
        }
        if self.local_steps == 0 || self.batch_size == 0 || self.dataset_size == 0 {
            return Err(invalid("steps, batch size and dataset size must be positive"));
        }
        if self.learning_rate * self.lambda_max >= 1.0 {
            return Err(Error::Assumption(format!(
                "learning_rate * lambda_max = {} must be below 1",
                self.learning_rate * self.lambda_max
            )));
        }
        Ok(())
    }
}

/// Upper bound `theta_i` on the distance between a client's noisy upload and
/// the centrally trained model.
pub fn divergence_bound(inputs: &DivergenceInputs, params: PrivacyParams) -> Result<f64> {
    inputs.validate()?;
    params.validate()?;
    let eta = inputs.learning_rate;
    let c = inputs.clip;
    let tau = inputs.local_steps as f64;

    let growth: f64 = (0..inputs.local_steps)
        .map(|j| (1.0 + eta * inputs.lambda_max).powi(j as i32))
        .sum();
    let skew: f64 = inputs
        .class_ratios
        .iter()
        .zip(&inputs.global_class_ratios)
        .map(|(p, q)| (p - q).abs())
        .sum();
    let noise = 4.0 * eta * c * inputs.sampling_rate() * (2.0 * tau * (1.0 / params.delta).ln()).sqrt()
        / (std::f64::consts::PI.sqrt() * inputs.batch_size as f64 * params.epsilon);
    Ok(growth * (eta * c * skew + noise))
}

/// `beta_i = min(N (1/theta_i) / sum_u (1/theta_u), 1)`.
pub fn participating_ratios(thetas: &[f64], channels: usize) -> Vec<f64> {
    let inv: Vec<f64> = thetas.iter().map(|&t| 1.0 / t.max(THETA_FLOOR)).collect();
    let total: f64 = inv.iter().sum();
    inv.iter()
        .map(|&x| (channels as f64 * x / total).min(1.0))
        .collect()
}

/// Per-client noise scales, upload counts and composed leakage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrivacyLedger {
    pub params: Vec<PrivacyParams>,
    pub sigma: Vec<f64>,
    pub uploads: Vec<u64>,
    pub leakage: Vec<f64>,
}

impl PrivacyLedger {
    pub fn new(params: Vec<PrivacyParams>, sigma: Vec<f64>) -> Self {
        assert_eq!(params.len(), sigma.len());
        let n = params.len();
        Self {
            params,
            sigma,
            uploads: vec![0; n],
            leakage: vec![0.0; n],
        }
    }

    /// Counts one more upload for every client whose indicator is set.
    pub fn record_upload(&mut self, indicators: &[bool]) {
        for (i, &ok) in indicators.iter().enumerate() {
            if ok {
                self.uploads[i] += 1;
                self.leakage[i] = compose_leakage(self.params[i], self.uploads[i]);
            }
        }
    }

    pub fn max_leakage(&self) -> f64 {
        self.leakage.iter().copied().fold(0.0, f64::max)
    }
}
