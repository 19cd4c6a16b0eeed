//! Command-line front end for incidence-lab.

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(name = "incidence-lab", version, about = "Dyadic point-tube incidence experiments")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by every subcommand.
#[derive(Args, Debug, Clone)]
pub struct Global {
    /// Dimension parameter of the points (default 1).
    #[arg(long, global = true)]
    pub s: Option<f64>,
    /// Dimension parameter of the lines (default 1).
    #[arg(long, global = true)]
    pub t: Option<f64>,
    /// Clique exponent, the target clique has θ ≥ δ^u (default 1).
    #[arg(long, global = true)]
    pub u: Option<f64>,
    /// Scale exponent, δ = 2^-m (default 10).
    #[arg(long, global = true)]
    pub m: Option<u32>,
    /// Generator seed (default 0).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Parameter overrides as inline JSON or a path to a JSON file.
    #[arg(long, global = true)]
    pub params: Option<String>,
    /// Directory for reports and artifacts; reports go to stdout when absent.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Print pipeline stage summaries to stderr.
    #[arg(long, global = true)]
    pub trace: bool,
    /// Worker threads for parallel work.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a family or a planted configuration.
    Gen(GenArgs),
    /// Katz-Tao or (δ,s,C) report for a family (exponent --s).
    Verify {
        file: PathBuf,
        #[arg(long, value_enum, default_value_t = Variant::KatzTao)]
        variant: Variant,
    },
    /// Count incidences; prints the count and writes per-tube counts with --out.
    Count {
        points: PathBuf,
        lines: PathBuf,
        #[arg(long, value_enum, default_value_t = Mode::Sweep)]
        mode: Mode,
    },
    /// Evaluate the Fu-Ren inequality.
    Bound {
        points: PathBuf,
        lines: PathBuf,
        #[arg(long, default_value_t = 0.0)]
        eps: f64,
        /// Katz-Tao constant of the points; measured when absent.
        #[arg(long)]
        kp: Option<f64>,
        /// Katz-Tao constant of the lines; measured when absent.
        #[arg(long)]
        kl: Option<f64>,
    },
    /// Extract a clique.
    Clique { points: PathBuf, lines: PathBuf },
    /// Find the sheaf rectangle of a clique.
    Sheaf {
        points: PathBuf,
        lines: PathBuf,
        /// Clique density; the measured density when absent.
        #[arg(long)]
        theta: Option<f64>,
    },
    /// Extract cliques with disjoint point sets until the floor is reached.
    Exhaust { points: PathBuf, lines: PathBuf },
    /// Uniformize a point family with block size --h.
    Uniformize {
        points: PathBuf,
        #[arg(long, default_value_t = 1)]
        h: u32,
    },
    /// Branching function of the uniformized family and its slope decomposition.
    Branching {
        points: PathBuf,
        #[arg(long, default_value_t = 1)]
        h: u32,
    },
    /// Incidence counts of sheaf configurations over scales and seeds, with exponent fits.
    Sweep {
        /// Scale exponents, comma separated.
        #[arg(long, value_delimiter = ',', default_values_t = [8u32, 10, 12])]
        ms: Vec<u32>,
        /// Seeds, comma separated.
        #[arg(long, value_delimiter = ',', default_values_t = [0u64])]
        seeds: Vec<u64>,
    },
}

#[derive(Args, Debug)]
pub struct GenArgs {
    #[arg(value_enum)]
    pub kind: GenKind,
    /// Plane of the generated family (cantor and random).
    #[arg(long, value_enum, default_value_t = Plane::Cell)]
    pub plane: Plane,
    /// Block size (cantor).
    #[arg(long, default_value_t = 1)]
    pub h: u32,
    /// Number of members (random).
    #[arg(long)]
    pub count: Option<usize>,
    /// Plant a single clique (sheaf).
    #[arg(long)]
    pub single: bool,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum GenKind {
    Sheaf,
    Cantor,
    Random,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum Plane {
    Cell,
    Dual,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum Variant {
    KatzTao,
    DeltaS,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Sweep,
    Brute,
}

/// Exit status for invalid input.
const EXIT_VALIDATION: u8 = 2;
/// Exit status for a structured pipeline failure.
const EXIT_PIPELINE: u8 = 3;

fn exit_code(e: &anyhow::Error) -> u8 {
    let pipeline = e.chain().any(|c| {
        matches!(
            c.downcast_ref::<incidence_lab::Error>(),
            Some(incidence_lab::Error::Pipeline { .. } | incidence_lab::Error::NoBreakpoint { .. })
        )
    });
    if pipeline {
        EXIT_PIPELINE
    } else {
        EXIT_VALIDATION
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter("INCIDENCE_LAB_LOG")).init();
    let cli = Cli::parse();
    match commands::run(&cli.global, &cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
