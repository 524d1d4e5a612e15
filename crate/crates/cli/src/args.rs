use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use dan_core::model::{Task, Variant};
use dan_core::tensor::OpKind;
use serde::{Deserialize, Serialize};

#[derive(Debug, Parser)]
#[command(name = "dan", version, about = "Dual attention network for labeling compatibility questions")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a templated synthetic corpus.
    Synth(SynthArgs),
    /// Train a model on a labeled corpus.
    Train(TrainArgs),
    /// Score a checkpoint on a labeled corpus.
    Eval(EvalArgs),
    /// Extract tuples from questions with a trained model.
    Predict(PredictArgs),
    /// Check backpropagated gradients against finite differences.
    Gradcheck(GradcheckArgs),
    /// Train every model variant and print the comparison table.
    Report(ReportArgs),
    /// Re-run a command recorded in a run manifest.
    Replay(ReplayArgs),
}

fn parse_task(s: &str) -> Result<Task, String> {
    s.parse()
}

fn parse_variant(s: &str) -> Result<Variant, String> {
    s.parse().map_err(|e: dan_core::Error| e.to_string())
}

fn parse_op(s: &str) -> Result<OpKind, String> {
    s.parse()
}

fn parse_mix(s: &str) -> Result<[f64; 3], String> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("`{p}`: {e}")))
        .collect::<Result<_, _>>()?;
    <[f64; 3]>::try_from(parts).map_err(|p| format!("expected three comma-separated weights, got {}", p.len()))
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub n: usize,
    #[arg(long, value_parser = parse_task)]
    pub task: Task,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Polarity proportions, e.g. `0.5,0.3,0.2`. Defaults to equal thirds.
    #[arg(long, value_parser = parse_mix)]
    pub mix: Option<[f64; 3]>,
    #[arg(long)]
    pub out: PathBuf,
    /// Defaults to `<out>.manifest.json`.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    /// Published hyperparameters (d_e 300, BLSTM 128, 82 tokens).
    Full,
    /// CPU-scale dimensions (d_e 64, BLSTM 64, 24 tokens).
    Micro,
}

/// Training settings. Every field is optional so that a JSON config file and
/// the command line can be layered over the preset.
#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSettings {
    #[arg(long, value_enum)]
    pub preset: Option<Preset>,
    #[arg(long, value_parser = parse_task)]
    pub task: Option<Task>,
    #[arg(long, value_parser = parse_variant)]
    pub variant: Option<Variant>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub dropout: Option<f64>,
    #[arg(long = "d-e")]
    pub d_e: Option<usize>,
    #[arg(long)]
    pub blstm: Option<usize>,
    #[arg(long)]
    pub tq: Option<usize>,
    #[arg(long)]
    pub ta: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Seed of the train/valid/test split; defaults to `--seed`.
    #[arg(long)]
    pub split_seed: Option<u64>,
    #[arg(long)]
    pub min_count: Option<usize>,
    #[arg(long)]
    pub clip_norm: Option<f64>,
    /// Word vectors in text format, one `token v1 .. vd` per line.
    #[arg(long)]
    pub vectors: Option<PathBuf>,
    /// Character n-gram vectors used for words missing from `--vectors`.
    #[arg(long)]
    pub ngram_vectors: Option<PathBuf>,
    /// Keep the embedding table fixed during training.
    #[arg(long)]
    pub freeze_embeddings: bool,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// JSON file with training settings; falls back to `$DAN_CONFIG`.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub settings: TrainSettings,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitChoice {
    Train,
    Valid,
    Test,
    All,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long, value_enum, default_value_t = SplitChoice::Test)]
    pub split: SplitChoice,
    /// Defaults to `eval_report.json` next to the checkpoint.
    #[arg(long)]
    pub report_out: Option<PathBuf>,
    /// Score the gold labels against themselves (pipeline debugging).
    #[arg(long)]
    pub labels_as_predictions: bool,
    /// Skip the check that the corpus reproduces the checkpoint vocabulary.
    #[arg(long)]
    pub no_vocab_check: bool,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = dan_core::gradcheck::DEFAULT_EPS)]
    pub eps: f64,
    #[arg(long, value_parser = parse_task, default_value = "satisf")]
    pub task: Task,
    /// Report JSON path.
    #[arg(long, default_value = "gradcheck.json")]
    pub out: PathBuf,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Corrupt one op's backward rule, to confirm that the check notices.
    #[arg(long, hide = true, value_parser = parse_op)]
    pub inject_fault: Option<OpKind>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Comma-separated variants; all four by default.
    #[arg(long, value_delimiter = ',', value_parser = parse_variant)]
    pub variants: Vec<Variant>,
    /// Comma-separated training seeds; scores are averaged over them.
    /// Takes the place of `--seed`.
    #[arg(long, value_delimiter = ',', default_value = "0")]
    pub seeds: Vec<u64>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub settings: TrainSettings,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    pub manifest: PathBuf,
    /// Directory receiving the re-run's outputs.
    #[arg(long)]
    pub out_dir: PathBuf,
}
