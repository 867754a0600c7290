use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use crf_harness::output::{resolve_out_dir, write_outcome};
use crf_harness::{run_experiment, ConfigError, ExperimentConfig, HarnessError, Lab, Mode};

/// Runs one experiment from a TOML config and writes run.csv and
/// report.json. Exits 0 when every invariant holds, 2 when one fails and 1
/// on configuration or runtime errors.
#[derive(Debug, Parser)]
#[command(name = "crf-lab", version)]
struct Cli {
    /// Experiment config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides the environment and the config.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Run this mode instead of the one named in the config.
    #[arg(long)]
    mode: Option<String>,
    /// Number of refinement levels for convergence studies (at least 3).
    #[arg(long)]
    levels: Option<usize>,
    /// Suppress progress and the summary on stderr.
    #[arg(long)]
    quiet: bool,
}

fn load(cli: &Cli) -> Result<ExperimentConfig, ConfigError> {
    let mut cfg = ExperimentConfig::load(&cli.config)?;
    if let Some(mode) = &cli.mode {
        cfg.run.mode = mode.parse::<Mode>()?;
    }
    if let Some(levels) = cli.levels {
        match cfg.convergence.as_mut() {
            Some(conv) => conv.levels = levels,
            None => {
                return Err(ConfigError::Invalid {
                    field: "convergence.levels",
                    reason: "--levels needs a [convergence] section".into(),
                })
            }
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn execute(cli: &Cli) -> Result<bool, HarnessError> {
    let cfg = load(cli)?;
    let lab = Lab::new(cli.quiet);
    let outcome = run_experiment(&lab, &cfg)?;
    let dir = resolve_out_dir(cli.out_dir.as_deref(), &cfg);
    write_outcome(&dir, &cfg, &outcome)?;
    if !cli.quiet {
        for inv in &outcome.invariants {
            eprintln!(
                "{} {}: {:e} {} {:e}",
                if inv.passed { "ok  " } else { "FAIL" },
                inv.name,
                inv.value,
                inv.relation,
                inv.threshold
            );
        }
        eprintln!("wrote {}", dir.display());
    }
    Ok(outcome.passed())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
