use serde::{Deserialize, Serialize};

use super::run::RunOutput;
use crate::error::{invalid, Error, Result};
use crate::matching::{brute_force_optimal, for_each_assignment, min_matched_edge, Assignment, RewardMatrix};

/// Value of the logarithmic regret bound, or why it does not apply.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RegretBound {
    Value(f64),
    /// The gap `delta_min - q_max - precision` is not positive.
    Inapplicable,
}

impl RegretBound {
    pub fn value(self) -> Option<f64> {
        match self {
            RegretBound::Value(v) => Some(v),
            RegretBound::Inapplicable => None,
        }
    }
}

/// `delta_max * (4 V^2 N (U + 2) ln T / gap^2 + (2U + 1) N)` with
/// `gap = delta_min - q_max - precision`.
#[allow(clippy::too_many_arguments)]
pub fn theorem4_bound(
    delta_min: f64,
    delta_max: f64,
    q_max: f64,
    precision: f64,
    v: f64,
    clients: usize,
    channels: usize,
    rounds: f64,
) -> RegretBound {
    let gap = delta_min - q_max - precision;
    if !(gap > 0.0) {
        return RegretBound::Inapplicable;
    }
    let (u, n) = (clients as f64, channels as f64);
    let log_term = 4.0 * v * v * n * (u + 2.0) * rounds.ln() / (gap * gap);
    RegretBound::Value(delta_max * (log_term + (2.0 * u + 1.0) * n))
}

/// Regret of a run against known means.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegretReport {
    pub mu_star: f64,
    pub optimal_assignment: Assignment,
    /// Smallest positive gap between the optimum and another assignment's value.
    pub delta_min: f64,
    /// Gap between the optimum and the worst assignment.
    pub delta_max: f64,
    pub q_max: f64,
    pub per_round: Vec<f64>,
    pub cumulative: Vec<f64>,
    pub bound: RegretBound,
}

impl RegretReport {
    pub fn total(&self) -> f64 {
        self.cumulative.last().copied().unwrap_or(0.0)
    }

    /// Cumulative regret after `rounds` rounds.
    pub fn at(&self, rounds: usize) -> f64 {
        if rounds == 0 {
            0.0
        } else {
            self.cumulative[rounds - 1]
        }
    }
}

/// `(delta_min, delta_max)` of a mean matrix whose optimum is `mu_star`.
pub fn gaps(means: &RewardMatrix, mu_star: f64) -> (f64, f64) {
    let mut runner_up = f64::NEG_INFINITY;
    let mut worst = f64::INFINITY;
    let mut values = |a: &[usize]| {
        let v = a.iter().enumerate().map(|(j, &i)| means.get(i, j)).fold(f64::INFINITY, f64::min);
        if v < mu_star {
            runner_up = runner_up.max(v);
        }
        worst = worst.min(v);
    };
    for_each_assignment(means.clients(), means.channels(), &mut values);
    let delta_min = if runner_up.is_finite() { mu_star - runner_up } else { 0.0 };
    (delta_min, mu_star - worst)
}

/// Regret series of `chosen` assignments against `means`.
pub fn regret_series(
    means: &RewardMatrix,
    chosen: &[Assignment],
    q_max: f64,
    precision: f64,
    v: f64,
) -> Result<RegretReport> {
    let (optimal_assignment, mu_star) = brute_force_optimal(means)?;
    let (delta_min, delta_max) = gaps(means, mu_star);
    let per_round = chosen
        .iter()
        .map(|a| min_matched_edge(means, a).map(|x| mu_star - x))
        .collect::<Result<Vec<_>>>()?;
    let cumulative = per_round
        .iter()
        .scan(0.0, |acc, r| {
            *acc += r;
            Some(*acc)
        })
        .collect();
    let bound = theorem4_bound(
        delta_min,
        delta_max,
        q_max,
        precision,
        v,
        means.clients(),
        means.channels(),
        chosen.len() as f64,
    );
    Ok(RegretReport {
        mu_star,
        optimal_assignment,
        delta_min,
        delta_max,
        q_max,
        per_round,
        cumulative,
        bound,
    })
}

/// Regret of an oracle-mode run. Physical runs have no known means and are
/// refused.
pub fn compute_regret(output: &RunOutput) -> Result<RegretReport> {
    let config = &output.config;
    let means = config
        .oracle_means()
        .ok_or_else(|| Error::Unsupported("regret needs oracle mode; true means are unknown in physical mode".into()))??;
    if output.metrics.is_empty() {
        return Err(invalid("no rounds to evaluate"));
    }
    let chosen: Vec<Assignment> = output.metrics.iter().map(|m| m.assignment.clone()).collect();
    let q_max = output
        .metrics
        .iter()
        .flat_map(|m| m.queues.iter().copied())
        .fold(0.0, f64::max);
    regret_series(&means, &chosen, q_max, config.matching_precision, config.v)
}
