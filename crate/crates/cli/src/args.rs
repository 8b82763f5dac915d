use std::net::SocketAddr;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use relabel_core::{GenerationMode, ReviewMode, TaskKind};

#[derive(Debug, Parser)]
#[command(name = "relabel", version, about = "Find noisy labels by model/human disagreement and re-label them in rounds")]
pub struct Cli {
    /// Store directory holding versions, rounds and state.
    #[arg(long, env = "RELABEL_STORE", global = true)]
    pub store: Option<PathBuf>,

    /// Output format for reports.
    #[arg(long, value_enum, default_value_t = Format::Human, global = true)]
    pub format: Format,

    /// Seed for every random choice (training order, simulation).
    #[arg(long, default_value_t = 0, global = true)]
    pub seed: u64,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Human,
    Json,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Create a store from a JSON-lines file of labeled items (round 0).
    Init {
        #[arg(long, value_parser = parse_task)]
        task: TaskKind,
        #[arg(long)]
        input: PathBuf,
    },
    /// Predict, flag disagreements and queue them for review.
    Detect(DetectArgs),
    /// Show a round's review queue, or rebuild it in another review mode.
    Queue {
        #[arg(long)]
        round: u32,
        /// Rebuild the queue in this mode (only before any decision is logged).
        #[arg(long, value_parser = parse_mode)]
        mode: Option<ReviewMode>,
    },
    /// Serve the review API for annotators.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: SocketAddr,
    },
    /// Merge a round's decisions into the next dataset version.
    Merge {
        #[arg(long)]
        round: u32,
        /// Resolved decisions; defaults to resolving the round's review log.
        #[arg(long)]
        decisions: Option<PathBuf>,
        /// Close the round for submissions before resolving its log.
        #[arg(long)]
        close: bool,
    },
    /// Train the baseline model on a dataset version.
    TrainBaseline {
        /// Version id; defaults to the current version.
        #[arg(long)]
        version: Option<String>,
        #[arg(long)]
        epochs: Option<u32>,
        #[arg(long)]
        learning_rate: Option<f64>,
    },
    /// Write predictions of a saved model as JSON lines to stdout.
    Predict {
        /// Checkpoint path, relative to the store unless absolute.
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        version: Option<String>,
    },
    /// Run a simulated loop on synthetic data with injected noise.
    Simulate(SimulateArgs),
    /// Per-round metric history, or the dev metric of a predictions file.
    Metrics {
        #[arg(long)]
        predictions: Option<PathBuf>,
    },
    /// Label changes between two versions (ids, round numbers, `initial` or `current`).
    Diff { from: String, to: String },
}

#[derive(Debug, Args)]
pub struct DetectArgs {
    #[arg(long)]
    pub round: u32,
    /// External predictions; without it the baseline is trained and used.
    #[arg(long)]
    pub predictions: Option<PathBuf>,
    #[arg(long)]
    pub iou_threshold: Option<f64>,
    #[arg(long, value_parser = parse_generation_mode)]
    pub generation_mode: Option<GenerationMode>,
    #[arg(long)]
    pub bleu_threshold: Option<f64>,
    #[arg(long)]
    pub ctr_threshold: Option<f64>,
    /// Tagging only: restrict detection to one entity class.
    #[arg(long)]
    pub entity_class: Option<String>,
    #[arg(long, value_parser = parse_mode)]
    pub review_mode: Option<ReviewMode>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, value_parser = parse_task)]
    pub task: TaskKind,
    #[arg(long, default_value_t = 2000)]
    pub n: usize,
    #[arg(long, default_value_t = 2)]
    pub classes: usize,
    #[arg(long, default_value_t = 0.15)]
    pub noise: f64,
    #[arg(long, default_value_t = 0.98)]
    pub annotator_accuracy: f64,
    #[arg(long, default_value_t = 2)]
    pub rounds: u32,
    #[arg(long, value_parser = parse_mode)]
    pub review_mode: Option<ReviewMode>,
}

fn parse_task(s: &str) -> Result<TaskKind, String> {
    s.parse().map_err(|e: relabel_core::Error| e.to_string())
}

fn parse_mode(s: &str) -> Result<ReviewMode, String> {
    match s {
        "choice" => Ok(ReviewMode::Choice),
        "open" => Ok(ReviewMode::Open),
        _ => Err(format!("expected choice or open, got {s:?}")),
    }
}

fn parse_generation_mode(s: &str) -> Result<GenerationMode, String> {
    match s {
        "common-token" => Ok(GenerationMode::CommonToken),
        "bleu" => Ok(GenerationMode::Bleu),
        _ => Err(format!("expected common-token or bleu, got {s:?}")),
    }
}
