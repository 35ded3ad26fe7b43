use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use ivory_cli::{run, write_output, CliError, Command, ExperimentConfig, Format};

/// Run one experiment and write its table, figure and report.
///
/// Exit status: 0 when every check passes, 1 when a check fails (the report
/// is still written), 2 for an invalid config, 3 for a numerical or i/o
/// failure.
#[derive(Debug, Parser)]
#[command(name = "ivory", version)]
struct Cli {
    /// Experiment to run.
    #[arg(value_enum)]
    command: Command,
    /// JSON config; defaults are used when absent.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Tolerance of every deterministic check.
    #[arg(long)]
    tolerance: Option<f64>,
    /// Format of the table.
    #[arg(long, value_enum)]
    format: Option<Format>,
}

fn load(cli: &Cli) -> Result<(ExperimentConfig, PathBuf), CliError> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
            ExperimentConfig::from_json(&text)?
        }
        None => ExperimentConfig::default(),
    };
    cfg.seed = cli.seed.or(cfg.seed);
    cfg.tolerance = cli.tolerance.or(cfg.tolerance);
    cfg.format = cli.format.or(cfg.format);
    let out = cli
        .out
        .clone()
        .or_else(|| cfg.out.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."));
    Ok((cfg, out))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = load(&cli).and_then(|(cfg, out)| {
        let output = run(cli.command, &cfg)?;
        write_output(&output, &out)?;
        Ok(output)
    });
    match result {
        Ok(output) => {
            for c in &output.report.checks {
                println!(
                    "{} {} measured={:e} tolerance={:e}",
                    if c.pass { "PASS" } else { "FAIL" },
                    c.name,
                    c.measured,
                    c.tolerance
                );
            }
            for (phase, t) in &output.timings {
                eprintln!("timing {phase} {:.3}s", t.as_secs_f64());
            }
            if output.report.pass {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
