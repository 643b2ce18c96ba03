use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

use viscoctl_cli::config::{Experiment, GridStep};
use viscoctl_cli::error::{exit, CliError, CliResult};
use viscoctl_cli::{report, run, RunConfig};

#[derive(Debug, Parser)]
#[command(
    name = "viscoctl",
    version,
    about = "Boundary controllability experiments for viscoelastic wave equations"
)]
struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, env = "VISCOCTL_OUT")]
    out: Option<PathBuf>,
    /// Worker threads for per-mode work.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Time step, overriding the configuration.
    #[arg(long, global = true)]
    grid_h: Option<f64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Eigenpairs and boundary-trace diagnostics.
    Spectrum,
    /// Per-mode Volterra responses.
    Responses,
    /// Gram matrix bounds of the configured family.
    Gram,
    /// Moment-problem control synthesis.
    Synthesize,
    /// Forward simulation of a synthesized or stored control.
    Verify,
    /// Lower Riesz bound against the horizon.
    #[command(name = "sweep-t", alias = "sweep-T")]
    SweepT,
    /// Markdown summary of JSON artifacts.
    Report { paths: Vec<PathBuf> },
}

fn execute(cli: Cli) -> CliResult<()> {
    if let Some(n) = cli.workers {
        viscoctl::par::init_workers(n);
    }
    let experiment = match cli.command {
        Command::Report { paths } => {
            print!("{}", report::render(&paths)?);
            return Ok(());
        }
        Command::Spectrum => Experiment::Spectrum,
        Command::Responses => Experiment::Responses,
        Command::Gram => Experiment::Gram,
        Command::Synthesize => Experiment::Synthesize,
        Command::Verify => Experiment::Verify,
        Command::SweepT => Experiment::SweepT,
    };
    let path = cli
        .config
        .ok_or_else(|| CliError::Config("--config is required".into()))?;
    let mut cfg = RunConfig::load(&path)?;
    cfg.experiment = Some(experiment);
    if let Some(h) = cli.grid_h {
        cfg.grid_h = GridStep::Step(h);
    }
    let out = cli
        .out
        .or_else(|| cfg.output.clone())
        .unwrap_or_else(|| PathBuf::from(run::DEFAULT_OUTPUT));
    let outcome = run(&cfg, &out)?;
    for a in &outcome.artifacts {
        println!("{}", a.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::from(exit::SUCCESS as u8),
        Err(e) => {
            eprintln!("viscoctl: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
