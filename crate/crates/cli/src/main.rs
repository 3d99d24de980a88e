mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use tracing_subscriber::EnvFilter;

#[derive(Debug, Parser)]
#[command(name = "pivotmatch", version)]
#[command(about = "Match a pivot table's schema to a standard relational table")]
struct Cli {
    /// TOML config file; flags take precedence over it.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Repeat for more detail (-v info, -vv debug, -vvv trace).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Search for the unpivot operator and matching; writes a result JSON.
    Match(MatchArgs),
    /// Score a result JSON against a ground truth.
    Eval(EvalArgs),
    /// Generate an instance bundle (pivot table, standard table, ground truth).
    Gen(GenArgs),
    /// Dump the attribute similarity matrix as CSV.
    Sim(SimArgs),
}

#[derive(Debug, Args)]
struct TableArgs {
    #[arg(long, value_name = "CSV")]
    source: Option<PathBuf>,
    #[arg(long, value_name = "CSV")]
    target: Option<PathBuf>,
    /// JSON object mapping source attribute to description.
    #[arg(long, value_name = "JSON")]
    source_desc: Option<PathBuf>,
    #[arg(long, value_name = "JSON")]
    target_desc: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum EmbedderKind {
    /// OpenAI-compatible embeddings endpoint.
    Remote,
    /// Offline character-trigram hashing.
    Local,
}

#[derive(Debug, Args)]
struct EmbedArgs {
    #[arg(long, value_enum)]
    embedder: Option<EmbedderKind>,
}

#[derive(Debug, Args)]
struct MatchArgs {
    #[command(flatten)]
    tables: TableArgs,
    /// Result JSON path; stdout when absent.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,

    /// Probability of a random radius-1 expansion.
    #[arg(long)]
    epsilon: Option<f64>,
    /// UCT exploration constant.
    #[arg(long)]
    uct_c: Option<f64>,
    /// Guard added to child visit counts in UCT.
    #[arg(long)]
    uct_eps: Option<f64>,
    #[arg(long)]
    max_children: Option<usize>,
    /// Search rounds; 0 evaluates the initial proposal only.
    #[arg(long)]
    iterations: Option<usize>,
    /// Concurrent passes per round.
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,

    /// Chat-completions URL.
    #[arg(long)]
    endpoint: Option<String>,
    #[arg(long)]
    model: Option<String>,
    /// Scripted replies instead of a live model.
    #[arg(long, value_name = "JSON")]
    mock: Option<PathBuf>,
    #[command(flatten)]
    embed: EmbedArgs,

    /// Report elapsed_ms as 0 so repeated runs are byte-identical.
    #[arg(long)]
    deterministic: bool,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[command(flatten)]
    tables: TableArgs,
    #[arg(long, value_name = "JSON")]
    ground_truth: Option<PathBuf>,
    /// Result JSON written by `match`.
    #[arg(long, value_name = "JSON")]
    result: Option<PathBuf>,
    /// Metrics JSON path; stdout when absent.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct GenArgs {
    /// Bundle directory.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Rows of the generated pivot table.
    #[arg(long, default_value_t = 6)]
    entities: usize,
    /// Spread columns of the generated pivot table.
    #[arg(long, default_value_t = 4)]
    metrics: usize,
    /// Pivot this tidy CSV instead of generating one.
    #[arg(long, value_name = "CSV", requires_all = ["spread", "value"])]
    tidy: Option<PathBuf>,
    /// Attribute whose values become the pivot columns.
    #[arg(long)]
    spread: Option<String>,
    /// Attribute whose values fill the pivot columns.
    #[arg(long)]
    value: Option<String>,
    /// Replace text values of these attributes with keyed tokens.
    #[arg(long, value_delimiter = ',')]
    anonymize: Vec<String>,
    /// Also write a mock script that answers with the ground truth.
    #[arg(long, value_name = "JSON")]
    mock_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SimArgs {
    #[command(flatten)]
    tables: TableArgs,
    /// CSV path; stdout when absent.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
    /// Unpivot these source attributes first.
    #[arg(long, value_delimiter = ',')]
    unpivot: Vec<String>,
    #[arg(long, default_value = "Metric")]
    var_name: String,
    #[arg(long, default_value = "Value")]
    value_name: String,
    #[command(flatten)]
    embed: EmbedArgs,
}

/// Process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Config = 2,
    Io = 3,
    Gateway = 4,
    Internal = 5,
}

#[derive(Debug)]
pub struct Failure {
    pub kind: Kind,
    pub error: anyhow::Error,
}

pub trait Tag<T> {
    fn tag(self, kind: Kind) -> Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> Tag<T> for Result<T, E> {
    fn tag(self, kind: Kind) -> Result<T, Failure> {
        self.map_err(|e| Failure {
            kind,
            error: e.into(),
        })
    }
}

fn init_tracing(verbose: u8) {
    let level = match verbose {
        0 => "warn",
        1 => "info",
        2 => "debug",
        _ => "trace",
    };
    let filter = EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new(level));
    tracing_subscriber::fmt()
        .with_env_filter(filter)
        .with_writer(std::io::stderr)
        .init();
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_tracing(cli.verbose);
    let file = match &cli.config {
        Some(p) => match config::FileConfig::load(p) {
            Ok(c) => c,
            Err(e) => {
                eprintln!("error: {e:#}");
                return ExitCode::from(Kind::Config as u8);
            }
        },
        None => config::FileConfig::default(),
    };
    let res = match cli.command {
        Command::Match(a) => commands::cmd_match(a, &file),
        Command::Eval(a) => commands::cmd_eval(a, &file),
        Command::Gen(a) => commands::cmd_gen(a, &file),
        Command::Sim(a) => commands::cmd_sim(a, &file),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.kind as u8)
        }
    }
}
