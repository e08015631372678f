//! `jimp`: file-based pipeline from synthetic perturbation data to an
//! amplification controller design.
//!
//! Each verb reads the outputs of the verbs before it from the output
//! directory and writes its own subdirectory:
//!
//! ```text
//! synth -> identify -> ftest
//!                   -> powerlaw -> design -> analyze -> report
//! ```

mod config;
mod verbs;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use joint_impedance::Error;

use config::RunConfig;
use verbs::{Ctx, Format};

#[derive(Parser)]
#[command(name = "jimp", version, about = "Joint impedance identification and amplifier design")]
struct Cli {
    #[command(subcommand)]
    verb: Verb,

    /// JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output root; each verb writes a subdirectory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,

    /// Also emit CSV tables where a verb has them.
    #[arg(long, global = true, value_enum, default_value = "json")]
    format: Format,
}

#[derive(Subcommand, Clone, Copy)]
enum Verb {
    /// Synthesize the nine-experiment protocol for each subject.
    Synth {
        /// Number of built-in cohort subjects.
        #[arg(long)]
        subjects: Option<usize>,
    },
    /// Extract frequency samples and fit M1, M2, M3.
    Identify,
    /// Nested-model F-tests on the RSS grid.
    Ftest,
    /// Subject and cohort damping-stiffness power laws.
    Powerlaw,
    /// Proportional gain, fractional order and lag ladder.
    Design,
    /// Margins, stiffness sweep, marginal order and amplification.
    Analyze,
    /// Collate all tables into one bundle.
    Report,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Infeasible { .. } => 4,
        e if e.is_numeric() => 3,
        _ => 2,
    }
}

fn run(cli: &Cli) -> Result<(), Error> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    let subjects = match cli.verb {
        Verb::Synth { subjects } => subjects,
        _ => None,
    };
    let ctx = Ctx { cfg, out: cli.out.clone(), format: cli.format, subjects };
    match cli.verb {
        Verb::Synth { .. } => verbs::synth(&ctx),
        Verb::Identify => verbs::identify(&ctx),
        Verb::Ftest => verbs::ftest(&ctx),
        Verb::Powerlaw => verbs::powerlaw(&ctx),
        Verb::Design => verbs::design(&ctx),
        Verb::Analyze => verbs::analyze(&ctx),
        Verb::Report => verbs::report(&ctx),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("jimp: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
