//! `penergy`: reproducible experiments on p-energy forms and their energy
//! measures.
//!
//! Exit codes: 0 pass, 1 a law or check failed, 2 configuration error,
//! 3 numerical non-convergence.

mod commands;
mod config;
mod svg;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{ProfileKind, SpaceKind};

#[derive(Parser, Debug)]
#[command(name = "penergy", version, about = "Energy measures of p-energy forms")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Global {
    /// JSON experiment config.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "penergy-out")]
    pub out: PathBuf,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; all cores when absent.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Also write SVG plots.
    #[arg(long, global = true)]
    pub plot: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Sampled checks of the form axioms and the Clarkson inequalities.
    ValidateForm,
    /// Constructs the energy measure of one function and compares it with
    /// the closed-form density.
    BuildMeasure,
    /// Runs the selected measure laws.
    CheckLaws,
    /// Korevaar–Schoen functionals along a decreasing radius sequence.
    KsEnergy(KsFlags),
    /// Renormalization constants of the Sierpinski gasket energy.
    SgRenorm,
}

/// Flags override the corresponding config keys.
#[derive(Args, Debug, Default)]
pub struct KsFlags {
    #[arg(long, value_enum)]
    pub space: Option<SpaceKind>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub p: Option<f64>,
    /// Comma-separated, strictly decreasing.
    #[arg(long, value_delimiter = ',')]
    pub r_list: Option<Vec<f64>>,
    #[arg(long, value_enum)]
    pub profile: Option<ProfileKind>,
    /// Values for `--profile file`, one per grid point.
    #[arg(long)]
    pub profile_file: Option<PathBuf>,
}

#[derive(Debug)]
pub enum Failure {
    /// A law or check did not hold.
    Law,
    Config(String),
    Numerical(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Self::Law => 1,
            Self::Config(_) => 2,
            Self::Numerical(_) => 3,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(jobs) = cli.global.jobs {
        if jobs == 0 {
            eprintln!("error: --jobs must be positive");
            return ExitCode::from(2);
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .expect("thread pool is configured once");
    }
    let result = match &cli.command {
        Command::ValidateForm => commands::validate_form(&cli.global),
        Command::BuildMeasure => commands::build_measure(&cli.global),
        Command::CheckLaws => commands::check_laws(&cli.global),
        Command::KsEnergy(flags) => commands::ks_energy(&cli.global, flags),
        Command::SgRenorm => commands::sg_renorm(&cli.global),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            match &f {
                Failure::Law => eprintln!("FAIL: see the reports in {}", cli.global.out.display()),
                Failure::Config(m) => eprintln!("config error: {m}"),
                Failure::Numerical(m) => eprintln!("numerical failure: {m}"),
            }
            ExitCode::from(f.code())
        }
    }
}
