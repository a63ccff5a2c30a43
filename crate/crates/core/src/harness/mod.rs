//! Experiment orchestration: configuration, the round loop, regret against
//! known means and CSV/JSON output.

mod config;
mod emit;
mod regret;
mod run;

pub use config::{
    CpuConfig, EnvMode, ExperimentConfig, InterferenceConfig, LearningConfig, OracleNoise, PrivacyConfig,
    WirelessConfig,
};
pub use emit::{csv_header, emit, write_csv, write_summary, FinalMetrics, Summary};
pub use regret::{compute_regret, gaps, regret_series, theorem4_bound, RegretBound, RegretReport};
pub use run::{compare, run_experiment, sweep, RoundMetrics, RunOutput, SweepParam};
