use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgAction, Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

mod commands;
mod error;
mod output;

#[derive(Debug, Parser)]
#[command(
    name = "dmpnn",
    version,
    about = "Dual message passing: data, oracles, verification and training"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a labelled (pattern, graph) dataset.
    Gen(GenArgs),
    /// Label (pattern, graph) pairs with the exact matcher.
    Oracle(OracleArgs),
    /// Replace each graph by its line graph.
    Transform(TransformArgs),
    /// Check isomorphism duality on enumerated graphs and optional pairs.
    Verify(VerifyArgs),
    /// Train a model on a dataset.
    Train(TrainArgs),
    /// Evaluate a checkpoint on a dataset.
    Eval(EvalArgs),
    /// Compare analytic gradients with finite differences.
    Gradcheck(GradcheckArgs),
    /// Time a single layer over growing edge counts.
    Bench(BenchArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    /// Erdős–Rényi graphs with a fixed edge probability.
    Erdos,
    /// Random d-regular graphs.
    Regular,
    /// Connected multigraphs with random vertex and edge labels.
    Hetero,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModeArg {
    CountMatch,
    LinkPred,
}

#[derive(Debug, Args, Serialize)]
pub struct GenArgs {
    #[arg(long, value_enum, default_value_t = Regime::Erdos)]
    pub regime: Regime,
    /// Vertices per graph.
    #[arg(long, default_value_t = 10)]
    pub n: usize,
    /// Number of graphs; each is paired with the pattern.
    #[arg(long, default_value_t = 100)]
    pub pairs: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub output: PathBuf,
    /// Edge probability (erdos).
    #[arg(long, default_value_t = 0.3)]
    pub edge_prob: f64,
    /// Vertex degree (regular).
    #[arg(long, default_value_t = 3)]
    pub degree: usize,
    /// Raw edges per graph (hetero); defaults to 2n.
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long, default_value_t = 1)]
    pub vertex_labels: u32,
    #[arg(long, default_value_t = 1)]
    pub edge_labels: u32,
    /// Pattern: triangle, 3-star, tailed-triangle, chordal-cycle, or a file
    /// holding one graph as JSON.
    #[arg(long, default_value = "triangle")]
    pub pattern: String,
    /// Per-pair matcher budget; pairs exceeding it are dropped.
    #[arg(long)]
    pub timeout_ms: Option<u64>,
    #[arg(long, action = ArgAction::Set, num_args = 0..=1, default_value_t = true, default_missing_value = "true")]
    pub with_reversed: bool,
}

#[derive(Debug, Args, Serialize)]
pub struct OracleArgs {
    /// JSON Lines file of {"pattern", "graph"} objects.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    #[arg(long)]
    pub timeout_ms: Option<u64>,
    /// Add reversed edges before matching.
    #[arg(long, action = ArgAction::Set, num_args = 0..=1, default_value_t = false, default_missing_value = "true")]
    pub with_reversed: bool,
}

#[derive(Debug, Args, Serialize)]
pub struct TransformArgs {
    /// JSON Lines file of graphs, or of objects with a "graph" field.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct VerifyArgs {
    /// Enumerate connected graphs with 2..=max-n vertices.
    #[arg(long, default_value_t = 4)]
    pub max_n: usize,
    /// Optional JSON Lines file of {"pattern", "graph"} pairs to check too.
    #[arg(long)]
    pub input: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct TrainArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// Checkpoint path; metrics go to <output>.metrics.jsonl.
    #[arg(long)]
    pub output: PathBuf,
    /// TOML file with training settings; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub k_layers: Option<usize>,
    #[arg(long)]
    pub width: Option<usize>,
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long, action = ArgAction::Set, num_args = 0..=1, default_value_t = true, default_missing_value = "true")]
    pub with_reversed: bool,
}

#[derive(Debug, Args, Serialize)]
pub struct EvalArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Seed for negative sampling in link-prediction mode.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, action = ArgAction::Set, num_args = 0..=1, default_value_t = true, default_missing_value = "true")]
    pub with_reversed: bool,
}

#[derive(Debug, Args, Serialize)]
pub struct GradcheckArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 64)]
    pub width: usize,
    #[arg(long, default_value_t = 1e-5)]
    pub eps: f64,
    /// Coordinates sampled per loss.
    #[arg(long, default_value_t = 300)]
    pub coords: usize,
}

#[derive(Debug, Args, Serialize)]
pub struct BenchArgs {
    #[arg(long, value_delimiter = ',', default_values_t = vec![1000, 2000, 4000, 8000])]
    pub sizes: Vec<usize>,
    #[arg(long, default_value_t = 64)]
    pub width: usize,
    #[arg(long, default_value_t = 5)]
    pub reps: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Gen(a) => commands::gen(&a),
        Command::Oracle(a) => commands::oracle(&a),
        Command::Transform(a) => commands::transform(&a),
        Command::Verify(a) => commands::verify(&a),
        Command::Train(a) => commands::train(&a),
        Command::Eval(a) => commands::eval(&a),
        Command::Gradcheck(a) => commands::gradcheck(&a),
        Command::Bench(a) => commands::bench(&a),
    };
    let exit = match result {
        Ok(exit) => exit,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit
        }
    };
    ExitCode::from(exit as u8)
}
