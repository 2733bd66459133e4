use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use cedent_cli::commands;
use cedent_cli::config::ExperimentConfig;
use cedent_cli::{CliError, OUT_DIR_ENV};

#[derive(Parser)]
#[command(
    name = "cedent",
    version,
    about = "Reinsurance layer experiments: marginal-gain scans, attachment benchmarks, margin-curve inspection and seeded simulation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Experiment configuration (INI-style); defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override the master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory (default: config out_dir, then $CEDENT_OUT, then ".").
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Override the simulation sample size.
    #[arg(long, global = true)]
    m: Option<usize>,

    /// Suppress the per-file summary lines.
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Tabulate the marginal coverage gain and report the implied layers.
    Psi,
    /// Degradation benchmark across severity families and book sizes.
    Table51,
    /// Tabulate the margin curve K and price level W with a condition report.
    Kfunction,
    /// Decay-rate study of attachment-rule degradations.
    Rates,
    /// Simulate the configured book and emit percentiles and moments.
    Simulate,
}

fn run(cli: &Cli) -> Result<Vec<PathBuf>, CliError> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::from_file(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.run.seed = seed;
    }
    if let Some(m) = cli.m {
        cfg.run.m = m;
        cfg.validate()?;
    }
    let out_dir = cli
        .out
        .clone()
        .or_else(|| cfg.run.out_dir.as_ref().map(PathBuf::from))
        .or_else(|| std::env::var(OUT_DIR_ENV).ok().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."));

    Ok(match cli.command {
        Command::Psi => commands::run_psi(&cfg, &out_dir)?.files,
        Command::Table51 => commands::run_table51(&cfg, &out_dir)?.files,
        Command::Kfunction => commands::run_kfunction(&cfg, &out_dir)?.files,
        Command::Rates => commands::run_rates(&cfg, &out_dir)?.files,
        Command::Simulate => commands::run_simulate(&cfg, &out_dir)?.files,
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(files) => {
            if !cli.quiet {
                for file in files {
                    println!("wrote {}", file.display());
                }
            }
            ExitCode::SUCCESS
        }
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
