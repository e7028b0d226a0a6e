use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use rdslab::config::{ExperimentConfig, OutputFormat};
use rdslab::experiment::{self, exit_code, RunOutput};
use rdslab::{Error, Result};

#[derive(Parser)]
#[command(name = "rdslab", version, about = "Quenched limit theorem experiments for random interval maps")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML experiment configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed, overriding the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory, overriding the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Raw, self-normalized and Brownian ensembles with the variance trace.
    Simulate,
    /// Martingale-coboundary decomposition tables and certificates.
    Decompose,
    /// Wasserstein rate of the self-normalized process against Brownian motion.
    Rate,
    /// Invariant suite; exits with status 3 if any check fails.
    Invariants,
    /// Return-time tails, renewal check and correlation decay on a tower.
    Tower,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

fn load(cli: &Cli) -> Result<ExperimentConfig> {
    let path = cli.config.as_ref().ok_or_else(|| Error::Config {
        field: "--config".into(),
        message: "a config file is required".into(),
    })?;
    let mut cfg = ExperimentConfig::load(path).map_err(|e| match e {
        Error::Io(io) => Error::Config {
            field: "--config".into(),
            message: format!("{}: {io}", path.display()),
        },
        other => other,
    })?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.out = o.clone();
    }
    if let Some(w) = cli.workers {
        cfg.workers = Some(w);
    }
    if let Some(f) = cli.format {
        cfg.format = match f {
            Format::Csv => OutputFormat::Csv,
            Format::Json => OutputFormat::Json,
        };
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<RunOutput> {
    let cfg = load(cli)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers.unwrap_or(0))
        .build()
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    pool.install(|| match cli.command {
        Command::Simulate => experiment::simulate(&cfg),
        Command::Decompose => experiment::decompose(&cfg),
        Command::Rate => experiment::rate(&cfg),
        Command::Invariants => experiment::invariants(&cfg),
        Command::Tower => experiment::tower(&cfg),
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(out) => {
            for l in &out.lines {
                println!("{l}");
            }
            for f in &out.files {
                println!("wrote {}", f.display());
            }
            if out.failed {
                eprintln!("error: invariant suite failed");
                ExitCode::from(3)
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
