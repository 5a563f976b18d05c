//! `peacock-lab` command-line tool.
//!
//! Exit codes: 0 success, 1 usage error, 2 validation failure, 3 numerical
//! or infeasibility failure (including a roundtrip error above
//! `--threshold`).

mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use peacock_lab::Convention;

pub const EXIT_OK: u8 = 0;
pub const EXIT_USAGE: u8 = 1;
pub const EXIT_VALIDATION: u8 = 2;
pub const EXIT_NUMERICAL: u8 = 3;

/// Caps the worker threads used by every parallel section.
pub const THREADS_ENV: &str = "PEACOCK_LAB_THREADS";

#[derive(Debug, Parser)]
#[command(name = "peacock-lab", version, about = "Martingales with prescribed marginals: calibration, forward equations, couplings")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ConventionArg {
    Additive,
    Multiplicative,
}

impl From<ConventionArg> for Convention {
    fn from(c: ConventionArg) -> Self {
        match c {
            ConventionArg::Additive => Convention::Additive,
            ConventionArg::Multiplicative => Convention::Multiplicative,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum, serde::Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ObjectiveArg {
    /// Any feasible coupling.
    Feasible,
    /// Minimize E|X − Y|.
    AbsDistance,
    /// Minimize E(X − Y)².
    Squared,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Local volatility from a call-price surface.
    Calibrate {
        #[arg(long)]
        surface: PathBuf,
        /// Overrides the convention in the surface sidecar.
        #[arg(long, value_enum)]
        convention: Option<ConventionArg>,
        /// JSON file with a `dupire` section.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Calibrate, evolve the forward equation and reprice.
    Roundtrip {
        #[arg(long)]
        surface: PathBuf,
        #[arg(long, value_enum)]
        convention: Option<ConventionArg>,
        /// JSON file with `dupire` and `fp` sections.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Largest acceptable relative reprice error.
        #[arg(long, default_value_t = 0.01)]
        threshold: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Simulate gallery processes and run the distinguisher and kernel tests.
    Gallery {
        #[arg(long)]
        spec: PathBuf,
        /// Overrides the seed of every process.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides the path count of every process.
        #[arg(long)]
        paths: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Check that a family of measures increases in convex order.
    VerifyPeacock {
        #[arg(long)]
        family: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Martingale coupling of two measures.
    Couple {
        #[arg(long)]
        mu: PathBuf,
        #[arg(long)]
        nu: PathBuf,
        #[arg(long, value_enum, default_value = "feasible")]
        objective: ObjectiveArg,
        /// JSON file with an optional `lipschitz_tolerance`.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn configure_threads() -> Result<Option<usize>, String> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(None);
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| format!("{THREADS_ENV} must be a positive integer, got '{raw}'"))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| format!("cannot configure thread pool: {e}"))?;
    Ok(Some(n))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let threads = match configure_threads() {
        Ok(t) => t,
        Err(msg) => {
            eprintln!("error: {msg}");
            return ExitCode::from(EXIT_USAGE);
        }
    };
    let ctx = commands::Context { threads };
    let code = match cli.command {
        Command::Calibrate {
            surface,
            convention,
            config,
            out,
        } => commands::calibrate(&ctx, &surface, convention.map(Into::into), config.as_deref(), &out),
        Command::Roundtrip {
            surface,
            convention,
            config,
            threshold,
            out,
        } => commands::roundtrip(&ctx, &surface, convention.map(Into::into), config.as_deref(), threshold, &out),
        Command::Gallery { spec, seed, paths, out } => commands::gallery(&ctx, &spec, seed, paths, &out),
        Command::VerifyPeacock { family, out } => commands::verify_peacock(&ctx, &family, &out),
        Command::Couple {
            mu,
            nu,
            objective,
            config,
            out,
        } => commands::couple(&ctx, &mu, &nu, objective, config.as_deref(), &out),
    };
    ExitCode::from(code)
}
