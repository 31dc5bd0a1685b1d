//! `cellsearch` — search, enumerate, cost, bench and pareto subcommands over
//! the cell-search engine. Outputs are plain text and CSV files for offline
//! inspection; there is no interactive mode.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 config/usage error,
//! 3 constraint-infeasible search.

mod commands;
mod config;

use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

use cellsearch::engine::SelectionMode;

#[derive(Debug)]
pub enum CliError {
    /// Bad flags, unreadable/invalid config or input files. Exit 2.
    Usage(String),
    /// The search halted because no candidate satisfies the hard
    /// constraints. Exit 3.
    Infeasible(String),
    /// Anything else. Exit 1.
    Runtime(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Runtime(_) => 1,
            CliError::Usage(_) => 2,
            CliError::Infeasible(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Infeasible(m) | CliError::Runtime(m) => m,
        }
    }
}

impl From<cellsearch::engine::EngineError> for CliError {
    fn from(err: cellsearch::engine::EngineError) -> Self {
        use cellsearch::engine::EngineError;
        match &err {
            EngineError::Config(_) => CliError::Usage(err.to_string()),
            EngineError::Infeasible { .. } => CliError::Infeasible(err.to_string()),
            _ => CliError::Runtime(err.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(err: std::io::Error) -> Self {
        CliError::Runtime(err.to_string())
    }
}

#[derive(Parser)]
#[command(name = "cellsearch", version, about = "Device-aware progressive cell search")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the progressive search described by a config file.
    Search {
        /// JSON run configuration.
        #[arg(long)]
        config: PathBuf,
        /// Run directory (overrides config and CELLSEARCH_RUN_DIR).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Seed override.
        #[arg(long)]
        seed: Option<u64>,
        /// Selection mode override (dpp or pnas).
        #[arg(long)]
        mode: Option<String>,
    },
    /// List or count all cells of a given depth.
    Enumerate {
        #[arg(long)]
        layers: usize,
        #[arg(long)]
        count_only: bool,
        /// Refuse to materialize spaces larger than this.
        #[arg(long)]
        cap: Option<u128>,
    },
    /// Per-layer and whole-network cost table for one cell.
    Cost {
        /// Canonical cell string, tokens joined by '|'.
        #[arg(long)]
        cell: String,
        /// Macro config JSON; defaults to the 32x32 three-stage setup.
        #[arg(long, value_name = "PATH")]
        macro_config: Option<PathBuf>,
        /// Also write the table as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Latency of one cell (or a whole depth's sweep) under device profiles
    /// or measured on this host.
    Bench {
        #[arg(long, conflicts_with = "all_depth")]
        cell: Option<String>,
        #[arg(long, value_name = "PATH")]
        macro_config: Option<PathBuf>,
        /// Device profile: a bundled name (gpu-like, mobile-like) or a JSON
        /// path. Repeatable.
        #[arg(long = "profile", conflicts_with = "measure")]
        profiles: Vec<String>,
        /// Measure wall-clock latency on this host instead.
        #[arg(long)]
        measure: bool,
        #[arg(long, default_value_t = cellsearch::devices::DEFAULT_REPEATS)]
        repeats: usize,
        #[arg(long, default_value_t = cellsearch::devices::DEFAULT_WARMUP)]
        warmup: usize,
        /// Sweep every cell of this depth and emit a CSV sorted by the
        /// first device's seconds.
        #[arg(long)]
        all_depth: Option<usize>,
        /// Output file for the sweep CSV (stdout if omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Annotate a CSV of objective columns with Pareto front membership.
    Pareto {
        /// Input CSV with a header row.
        #[arg(long)]
        input: PathBuf,
        /// Objective spec: comma-separated name:min|max entries.
        #[arg(long)]
        objectives: String,
        /// Hard constraints: comma-separated name:bound entries (direction
        /// taken from the objective spec).
        #[arg(long)]
        hard: Option<String>,
        /// Select exactly K rows (after hard filtering).
        #[arg(long)]
        k: Option<usize>,
        /// Selection mode for --k (dpp or pnas).
        #[arg(long, default_value = "dpp")]
        mode: String,
        /// Column ranked by pnas mode; defaults to the first objective.
        #[arg(long)]
        accuracy: Option<String>,
        /// Output CSV (stdout if omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn parse_mode(text: &str) -> Result<SelectionMode, CliError> {
    text.parse::<SelectionMode>().map_err(CliError::Usage)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Search {
            config,
            out,
            seed,
            mode,
        } => {
            let mode = match mode.as_deref().map(parse_mode) {
                Some(Ok(m)) => Some(m),
                Some(Err(e)) => return exit_with(e),
                None => None,
            };
            commands::search::run(&config, out.as_deref(), seed, mode)
        }
        Command::Enumerate {
            layers,
            count_only,
            cap,
        } => commands::enumerate::run(layers, count_only, cap),
        Command::Cost {
            cell,
            macro_config,
            csv,
        } => commands::cost::run(&cell, macro_config.as_deref(), csv.as_deref()),
        Command::Bench {
            cell,
            macro_config,
            profiles,
            measure,
            repeats,
            warmup,
            all_depth,
            out,
        } => commands::bench::run(commands::bench::Args {
            cell,
            macro_config,
            profiles,
            measure,
            repeats,
            warmup,
            all_depth,
            out,
        }),
        Command::Pareto {
            input,
            objectives,
            hard,
            k,
            mode,
            accuracy,
            out,
        } => commands::pareto::run(commands::pareto::Args {
            input,
            objectives,
            hard,
            k,
            mode,
            accuracy,
            out,
        }),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => exit_with(err),
    }
}

fn exit_with(err: CliError) -> ExitCode {
    eprintln!("error: {}", err.message());
    ExitCode::from(err.exit_code())
}
