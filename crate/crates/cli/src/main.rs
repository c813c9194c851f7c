//! `interference-lab <scenario> --config <path> [--scale full|half|quarter] [--seed N] [--out DIR] [--threads N]`
//!
//! Exit codes: 0 success, 2 configuration error, 3 assumption violation, 4 enumeration cap.

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use interference_core::sim::{default_out_dir, preset, run, ExperimentConfig, RunOptions, Scale, Scenario};
use interference_core::Error;

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ScenarioArg {
    CltTec,
    CltAtec,
    StabilityRmse,
    StabilityCi,
    EpsilonSensitivity,
    GroupSize,
    HouseholdMixed,
}

impl From<ScenarioArg> for Scenario {
    fn from(s: ScenarioArg) -> Self {
        match s {
            ScenarioArg::CltTec => Scenario::CltTec,
            ScenarioArg::CltAtec => Scenario::CltAtec,
            ScenarioArg::StabilityRmse => Scenario::StabilityRmse,
            ScenarioArg::StabilityCi => Scenario::StabilityCi,
            ScenarioArg::EpsilonSensitivity => Scenario::EpsilonSensitivity,
            ScenarioArg::GroupSize => Scenario::GroupSize,
            ScenarioArg::HouseholdMixed => Scenario::HouseholdMixed,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ScaleArg {
    Full,
    Half,
    Quarter,
}

impl From<ScaleArg> for Scale {
    fn from(s: ScaleArg) -> Self {
        match s {
            ScaleArg::Full => Scale::Full,
            ScaleArg::Half => Scale::Half,
            ScaleArg::Quarter => Scale::Quarter,
        }
    }
}

/// Replicates simulation studies of design-based inference under interference.
#[derive(Debug, Parser)]
#[command(name = "interference-lab", version)]
struct Cli {
    /// Scenario to run.
    #[arg(value_enum)]
    scenario: ScenarioArg,
    /// TOML or JSON experiment file; the bundled preset is used when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Replication budget relative to the configured reps.
    #[arg(long, value_enum, default_value = "full")]
    scale: ScaleArg,
    /// Master seed, overriding the configuration.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (default `results/<scenario>`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
}

fn execute(cli: &Cli) -> Result<(), Error> {
    let scenario = Scenario::from(cli.scenario);
    let config = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => preset(scenario),
    };
    if config.scenario != scenario {
        return Err(Error::Config(format!(
            "configuration describes {} but {} was requested",
            config.scenario, scenario
        )));
    }
    if cli.threads == Some(0) {
        return Err(Error::Config("--threads must be positive".into()));
    }
    let opts = RunOptions {
        scale: cli.scale.into(),
        seed: cli.seed,
        threads: cli.threads,
    };
    let output = run(&config, &opts)?;
    let dir = cli.out.clone().unwrap_or_else(|| default_out_dir(scenario));
    let written = output.write_to(&dir)?;
    let mut stdout = std::io::stdout().lock();
    for path in written {
        if writeln!(stdout, "{}", path.display()).is_err() {
            break;
        }
    }
    eprintln!(
        "{}: {} rows, {} reps, {:.1} s",
        scenario,
        output.rows.len(),
        output.config.reps,
        output.wall_seconds
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
