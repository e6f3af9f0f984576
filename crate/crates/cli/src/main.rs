use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod commands;
mod config;

use config::load;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error at {pointer}: {message}")]
    Config { pointer: String, message: String },
    #[error("{0}")]
    Io(String),
    #[error(transparent)]
    Core(#[from] kuhnfem::error::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Kuhn-triangulation finite elements for weighted Dirichlet forms.
#[derive(Parser)]
#[command(name = "kuhnfem", version)]
struct Cli {
    /// Output directory; defaults to $KUHNFEM_OUT_DIR, then ./out.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Replaces the root seed of the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Triangulation, tent and PL-space invariant suites.
    VerifyBasis { config: PathBuf },
    /// delta and C along r = 1/m for one density.
    DeltaSweep { config: PathBuf },
    /// Stiffness and mass matrices in Matrix Market format.
    Assemble { config: PathBuf },
    /// G_alpha f for a nodal input.
    Resolvent { config: PathBuf },
    /// T_t f by implicit Euler with Richardson extrapolation.
    Semigroup { config: PathBuf },
    /// Gaussian measure with a BV potential along coordinate projections.
    Mosco { config: PathBuf },
    /// Tent envelopes and Jordan decomposition of a BV function.
    Envelopes { config: PathBuf },
}

fn run(cli: Cli) -> Result<bool, CliError> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Io(format!("thread pool: {e}")))?;
    }
    let out = cli
        .out
        .or_else(|| std::env::var_os("KUHNFEM_OUT_DIR").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"));
    let s = cli.seed;
    match cli.command {
        Command::VerifyBasis { config } => commands::verify_basis(load(&config, s)?, &out),
        Command::DeltaSweep { config } => commands::delta_sweep_cmd(load(&config, s)?, &out),
        Command::Assemble { config } => commands::assemble_cmd(load(&config, s)?, &out),
        Command::Resolvent { config } => commands::resolvent_cmd(load(&config, s)?, &out),
        Command::Semigroup { config } => commands::semigroup_cmd(load(&config, s)?, &out),
        Command::Mosco { config } => commands::mosco_cmd(load(&config, s)?, &out),
        Command::Envelopes { config } => commands::envelopes_cmd(load(&config, s)?, &out),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("one or more checks failed");
            ExitCode::from(1)
        }
        Err(e @ CliError::Config { .. }) => {
            eprintln!("{e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(3)
        }
    }
}
