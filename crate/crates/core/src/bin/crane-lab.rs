use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use crane_lab::cli::{self, Format, Subcommand, EXIT_ERROR};

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Cmd {
    /// Parameter admissibility and derived weights.
    Check,
    /// Crank-Nicolson run with energy trace.
    Simulate,
    /// Eigenvalues of the discrete generator.
    Spectrum,
    /// Discrete and continuous resolvent norms along the imaginary axis.
    Sweep,
    /// Single continuous resolvent solve.
    Bvp,
    /// Decay of the Green's integrals in the frequency.
    Appb,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Fmt {
    Csv,
    Json,
}

/// Stability laboratory for a boundary-controlled hanging chain.
#[derive(Debug, Parser)]
#[command(version)]
struct Args {
    #[arg(value_enum)]
    subcommand: Cmd,
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "csv")]
    format: Fmt,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let sub = match args.subcommand {
        Cmd::Check => Subcommand::Check,
        Cmd::Simulate => Subcommand::Simulate,
        Cmd::Spectrum => Subcommand::Spectrum,
        Cmd::Sweep => Subcommand::Sweep,
        Cmd::Bvp => Subcommand::Bvp,
        Cmd::Appb => Subcommand::Appb,
    };
    let format = match args.format {
        Fmt::Csv => Format::Csv,
        Fmt::Json => Format::Json,
    };
    match cli::run(sub, &args.config, &args.out, format) {
        Ok(o) => {
            for (k, v) in &o.report.verdicts {
                println!("{k}: {v}");
            }
            if !o.report.admissibility.admissible {
                eprintln!(
                    "not admissible: {}",
                    o.report.admissibility.violations.join(", ")
                );
            }
            ExitCode::from(o.exit_code as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_ERROR as u8)
        }
    }
}
