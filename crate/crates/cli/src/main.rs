use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::{info, warn};

use mamab_fl::harness::{compare, compute_regret, emit, run_experiment, sweep, EnvMode, SweepParam};
use mamab_fl::{ExperimentConfig, Policy, RegretReport, RunOutput};

/// Bandit-scheduled federated learning over wireless channels.
#[derive(Debug, Parser)]
#[command(name = "mamab-fl", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one experiment and write metrics.csv and summary.json.
    Run {
        #[command(flatten)]
        common: Common,
    },
    /// Run an oracle-mode experiment and report regret against the known means.
    Regret {
        #[command(flatten)]
        common: Common,
    },
    /// Run one experiment per value of a parameter.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// v, t0, epsilon, d-max, gamma or rounds.
        #[arg(long)]
        param: String,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
    },
    /// Run the same experiment under several scheduling policies.
    Compare {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', required = true)]
        policies: Vec<Policy>,
    },
}

#[derive(Debug, Args)]
struct Common {
    /// JSON experiment config; omitted fields take their defaults. Required
    /// by run and regret, otherwise the default preset is used.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the seed in the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "results")]
    out: PathBuf,
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Run(#[from] mamab_fl::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Run(_) => 1,
        }
    }
}

impl Common {
    fn load(&self, required: bool) -> Result<ExperimentConfig, CliError> {
        let mut config = match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path)
                    .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
                ExperimentConfig::from_json(&text)
                    .map_err(|e| CliError::Usage(format!("bad config {}: {e}", path.display())))?
            }
            None if required => return Err(CliError::Usage("--config is required".into())),
            None => ExperimentConfig::default(),
        };
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        Ok(config)
    }
}

fn regret_of(output: &RunOutput) -> Result<Option<RegretReport>, CliError> {
    match output.config.mode {
        EnvMode::Oracle { .. } => Ok(Some(compute_regret(output)?)),
        EnvMode::Physical => Ok(None),
    }
}

fn write(output: &RunOutput, dir: &Path) -> Result<(), CliError> {
    for w in &output.warnings {
        warn!("{w}");
    }
    let regret = regret_of(output)?;
    let (csv, _) = emit(output, regret.as_ref(), dir)?;
    let last = output.last();
    let mut line = format!(
        "{}: {} rounds, cumulative delay {:.3} s",
        output.config.policy, last.t, last.cum_delay_s
    );
    if let Some(acc) = last.accuracy {
        line.push_str(&format!(", accuracy {acc:.4}"));
    }
    if let Some(r) = &regret {
        line.push_str(&format!(", regret {:.3}", r.total()));
    }
    println!("{line} -> {}", csv.parent().unwrap_or(dir).display());
    Ok(())
}

fn execute(command: Command) -> Result<(), CliError> {
    match command {
        Command::Run { common } => {
            let config = common.load(true)?;
            write(&run_experiment(&config)?, &common.out)
        }
        Command::Regret { common } => {
            let config = common.load(true)?;
            if matches!(config.mode, EnvMode::Physical) {
                return Err(CliError::Usage(
                    "regret needs an oracle-mode config with known means".into(),
                ));
            }
            let output = run_experiment(&config)?;
            write(&output, &common.out)?;
            let report = compute_regret(&output)?;
            println!(
                "mu* {:.4}, gap min {:.4} max {:.4}, q_max {:.4}, bound {:?}",
                report.mu_star, report.delta_min, report.delta_max, report.q_max, report.bound
            );
            Ok(())
        }
        Command::Sweep {
            common,
            param,
            values,
        } => {
            let which: SweepParam = param.parse().map_err(|e| CliError::Usage(format!("{e}")))?;
            let config = common.load(false)?;
            info!("sweeping {param} over {values:?}");
            let outputs = sweep(&config, which, &values)?;
            for (output, value) in outputs.iter().zip(&values) {
                write(output, &common.out.join(format!("{param}={value}")))?;
            }
            Ok(())
        }
        Command::Compare { common, policies } => {
            let config = common.load(false)?;
            let outputs = compare(&config, &policies)?;
            for output in &outputs {
                write(output, &common.out.join(output.config.policy.name()))?;
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("mamab-fl: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
