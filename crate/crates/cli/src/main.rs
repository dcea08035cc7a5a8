//! `vinegof`: simulate, fit and test regular vine copula models.
//!
//! Every option can also be set in a `key=value` file passed with
//! `--config`; options given on the command line take precedence.
//!
//! Exit codes: 0 success, 2 input error, 3 estimation failure,
//! 4 unsupported request, 5 numerical failure.

mod commands;
mod config;

use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;
use vinegof::VineError;

#[derive(Parser, Debug)]
#[command(name = "vinegof", version, about = "Regular vine copulas and the information-matrix goodness-of-fit test")]
#[command(after_help = "Options may also be given in a key=value file (--config); command-line flags override the file, \
                        which overrides the defaults.")]
struct Cli {
    /// key=value file with option values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate copula data from a model file.
    Simulate(SimulateArgs),
    /// Estimate the parameters of a structure and families on data.
    Fit(FitArgs),
    /// Goodness-of-fit test of a model on data.
    Gof(GofArgs),
    /// Run a size and power study.
    Study(StudyArgs),
    /// Select structure and families by maximum spanning trees.
    Select(SelectArgs),
    /// Transform raw data to copula data.
    Margins(MarginsArgs),
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    /// Model file.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Number of observations.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output CSV.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct FitArgs {
    /// Structure and families; parameters, if present, are starting values.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    /// Data CSV.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Joint maximum likelihood after the sequential fit.
    #[arg(long)]
    pub full: bool,
    /// Margin treatment for raw data: known, rank or ifm.
    #[arg(long)]
    pub margins: Option<String>,
    /// Where to write the fitted model.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct GofArgs {
    /// Model file.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Data CSV.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Re-estimate the model's parameters on the data first.
    #[arg(long, conflicts_with = "assume_fitted")]
    pub refit: bool,
    /// Treat the model's parameters as estimated on the data.
    #[arg(long)]
    pub assume_fitted: bool,
    /// Parametric bootstrap with B replicates of size N.
    #[arg(long, num_args = 2, value_names = ["B", "N"])]
    pub bootstrap: Option<Vec<usize>>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Joint maximum likelihood for every estimation.
    #[arg(long)]
    pub full: bool,
    /// Where to write the result JSON (default: standard output).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct StudyArgs {
    /// Built-in study: I_mixed, I_low, I_med, II, III_mtcop or III_rvine_t.
    pub id: Option<String>,
    /// Sample size per replicate.
    #[arg(long)]
    pub n: Option<usize>,
    /// Number of replicates.
    #[arg(long = "R", alias = "r")]
    pub r: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// known, rank, ifm or ifm:s1,...,sd (normal margin scales).
    #[arg(long)]
    pub margins: Option<String>,
    /// simulated, asymptotic or both.
    #[arg(long)]
    pub pvalues: Option<String>,
    /// Joint maximum likelihood in every replicate.
    #[arg(long)]
    pub full: bool,
    /// Size of the sample the alternatives are estimated on.
    #[arg(long)]
    pub prerun_n: Option<usize>,
}

#[derive(Args, Debug)]
pub struct SelectArgs {
    /// Data CSV.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// aic or bic.
    #[arg(long)]
    pub criterion: Option<String>,
    /// Comma-separated family codes (default: all).
    #[arg(long)]
    pub families: Option<String>,
    /// Keep this structure and select families only.
    #[arg(long)]
    pub structure: Option<PathBuf>,
    /// Margin treatment for raw data: known, rank or ifm.
    #[arg(long)]
    pub margins: Option<String>,
    /// Where to write the selected model.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct MarginsArgs {
    /// Raw data CSV with a header row.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// rank or ifm.
    #[arg(long)]
    pub method: Option<String>,
    /// Comma-separated margin families for ifm: normal, t, exp (one, or one per column).
    #[arg(long)]
    pub families: Option<String>,
    /// Output CSV of copula data.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Where to write the fitted margins as JSON.
    #[arg(long)]
    pub fits: Option<PathBuf>,
}

/// Exit status for an error.
fn exit_code(e: &VineError) -> u8 {
    match e {
        VineError::Optimization { .. } | VineError::Convergence { .. } | VineError::TooManyFailures { .. } => 3,
        VineError::Unsupported(_) => 4,
        VineError::Numerical(_) | VineError::SingularHessian { .. } => 5,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = config::ConfigFile::read(cli.config.as_deref()).and_then(|cfg| {
        let threads = cfg.pick(cli.threads, "threads")?;
        if let Some(t) = threads {
            rayon::ThreadPoolBuilder::new()
                .num_threads(t)
                .build_global()
                .map_err(|e| VineError::Config(e.to_string()))?;
        }
        match &cli.command {
            Command::Simulate(a) => commands::simulate(a, &cfg),
            Command::Fit(a) => commands::fit(a, &cfg),
            Command::Gof(a) => commands::gof(a, &cfg),
            Command::Study(a) => commands::study(a, &cfg),
            Command::Select(a) => commands::select(a, &cfg),
            Command::Margins(a) => commands::margins(a, &cfg),
        }
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
