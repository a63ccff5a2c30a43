use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::regret::{RegretBound, RegretReport};
use super::run::RunOutput;
use crate::error::Result;

/// CSV header: six round columns, then `q_i`, `sel_frac_i` and `eps_bar_i`
/// for clients `1..=U`, grouped by quantity.
pub fn csv_header(clients: usize) -> Vec<String> {
    let mut h: Vec<String> = ["t", "delay_s", "cum_delay_s", "min_reward", "accuracy", "loss"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    for prefix in ["q", "sel_frac", "eps_bar"] {
        h.extend((1..=clients).map(|i| format!("{prefix}_{i}")));
    }
    h
}

/// One row per round. Accuracy and loss are empty when learning is off.
pub fn write_csv<W: Write>(output: &RunOutput, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(csv_header(output.config.clients))?;
    let opt = |x: Option<f64>| x.map_or_else(String::new, |v| v.to_string());
    for m in &output.metrics {
        let mut row = vec![
            m.t.to_string(),
            m.delay_s.to_string(),
            m.cum_delay_s.to_string(),
            m.min_reward.to_string(),
            opt(m.accuracy),
            opt(m.loss),
        ];
        for series in [&m.queues, &m.selection_fraction, &m.eps_bar] {
            row.extend(series.iter().map(f64::to_string));
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalMetrics {
    pub rounds: u64,
    pub cum_delay_s: f64,
    pub mean_delay_s: f64,
    pub accuracy: Option<f64>,
    pub loss: Option<f64>,
    pub queues: Vec<f64>,
    pub selection_fraction: Vec<f64>,
    pub eps_bar: Vec<f64>,
    pub max_eps_bar: f64,
}

/// JSON summary of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub config: ExperimentConfig,
    pub betas: Vec<f64>,
    pub thetas: Option<Vec<f64>>,
    pub sigmas: Vec<f64>,
    pub model_bits: u64,
    #[serde(rename = "final")]
    pub last: FinalMetrics,
    pub regret: Option<RegretReport>,
    pub bound: Option<RegretBound>,
    pub warnings: Vec<String>,
}

impl Summary {
    pub fn new(output: &RunOutput, regret: Option<&RegretReport>) -> Self {
        let m = output.last();
        Self {
            config: output.config.clone(),
            betas: output.betas.clone(),
            thetas: output.thetas.clone(),
            sigmas: output.sigmas.clone(),
            model_bits: output.model_bits,
            last: FinalMetrics {
                rounds: m.t,
                cum_delay_s: m.cum_delay_s,
                mean_delay_s: m.cum_delay_s / m.t as f64,
                accuracy: m.accuracy,
                loss: m.loss,
                queues: m.queues.clone(),
                selection_fraction: m.selection_fraction.clone(),
                eps_bar: m.eps_bar.clone(),
                max_eps_bar: m.eps_bar.iter().copied().fold(0.0, f64::max),
            },
            regret: regret.cloned(),
            bound: regret.map(|r| r.bound),
            warnings: output.warnings.clone(),
        }
    }
}

pub fn write_summary<W: Write>(summary: &Summary, mut writer: W) -> Result<()> {
    serde_json::to_writer_pretty(&mut writer, summary)?;
    writeln!(writer)?;
    Ok(())
}

/// Writes `metrics.csv` and `summary.json` into `dir`, creating it if needed.
pub fn emit(output: &RunOutput, regret: Option<&RegretReport>, dir: &Path) -> Result<(PathBuf, PathBuf)> {
    fs::create_dir_all(dir)?;
    let csv_path = dir.join("metrics.csv");
    let json_path = dir.join("summary.json");
    write_csv(output, fs::File::create(&csv_path)?)?;
    write_summary(&Summary::new(output, regret), fs::File::create(&json_path)?)?;
    Ok((csv_path, json_path))
}
