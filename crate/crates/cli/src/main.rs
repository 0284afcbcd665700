use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;
mod manifest;

use commands::Failure;

/// Constant-modulus MIMO-OFDM waveform synthesis and evaluation.
#[derive(Debug, Parser)]
#[command(name = "isacwf", version)]
struct Cli {
    /// Worker thread cap for sweeps and Monte-Carlo trials.
    #[arg(long, global = true, env = "ISACWF_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Run configuration (TOML).
    #[arg(long, short)]
    pub config: PathBuf,
    /// Output directory, created if missing.
    #[arg(long, short)]
    pub out: PathBuf,
    /// Override a config field, e.g. `--set solver.rho=10`. Repeatable.
    #[arg(long = "set", value_name = "PATH=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve for a waveform and write it with its audit and trace.
    Synthesize(Common),
    /// Evaluate a waveform CSV against the configured scenario.
    Evaluate {
        #[command(flatten)]
        common: Common,
        /// Time-domain waveform CSV.
        #[arg(long, short)]
        waveform: PathBuf,
        /// Also run the Monte-Carlo detection study.
        #[arg(long)]
        roc: bool,
        /// Also run the Monte-Carlo RMSE study.
        #[arg(long)]
        rmse: bool,
    },
    /// Solve across one dimension axis with several seeds per value.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        axis: Option<String>,
        /// Comma-separated axis values.
        #[arg(long, value_delimiter = ',')]
        values: Option<Vec<usize>>,
        #[arg(long)]
        trials: Option<usize>,
    },
    /// Time solves across one dimension axis.
    Bench {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        axis: Option<String>,
        #[arg(long, value_delimiter = ',')]
        values: Option<Vec<usize>>,
        #[arg(long)]
        repetitions: Option<usize>,
    },
    /// Emit a reference waveform.
    Baseline {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        kind: BaselineKind,
        /// Zadoff-Chu root, coprime to n_sym * n_sc.
        #[arg(long, default_value_t = 1)]
        root: u64,
        /// Grid the ZC sequence fills.
        #[arg(long, value_enum, default_value_t = Mapping::Time)]
        mapping: Mapping,
        /// Seed for the random waveform; defaults to the config seed.
        #[arg(long)]
        seed: Option<u64>,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum BaselineKind {
    Zc,
    Random,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Mapping {
    Time,
    Frequency,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
        {
            eprintln!("error: cannot configure {n} threads: {e}");
            return ExitCode::from(2);
        }
    }
    let outcome = match cli.command {
        Command::Synthesize(common) => commands::synthesize(&common),
        Command::Evaluate {
            common,
            waveform,
            roc,
            rmse,
        } => commands::evaluate(&common, &waveform, roc, rmse),
        Command::Sweep {
            common,
            axis,
            values,
            trials,
        } => commands::sweep(&common, axis.as_deref(), values, trials),
        Command::Bench {
            common,
            axis,
            values,
            repetitions,
        } => commands::bench(&common, axis.as_deref(), values, repetitions),
        Command::Baseline {
            common,
            kind,
            root,
            mapping,
            seed,
        } => commands::baseline(&common, kind, root, mapping, seed),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

impl From<isac_waveform::Error> for Failure {
    fn from(e: isac_waveform::Error) -> Self {
        use isac_waveform::Error as E;
        let code = match &e {
            E::Io(_) => 4,
            E::NonFinite(_) | E::OffManifold { .. } | E::ZeroEntry { .. } => 3,
            _ => 2,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}
