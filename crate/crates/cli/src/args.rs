use std::path::PathBuf;

use clap::{ArgAction, Args, Parser, Subcommand};
use embedalign::models::Arch;
use embedalign::pipeline::Direction;
use embedalign::synth::TransformKind;

#[derive(Debug, Parser)]
#[command(name = "embedalign", version, about = "Train and evaluate embedding aligners")]
pub struct Cli {
    /// More log output (repeatable).
    #[arg(short, long, action = ArgAction::Count, global = true)]
    pub verbose: u8,
    /// Only errors on stderr.
    #[arg(short, long, global = true, conflicts_with = "verbose")]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic bilingual embedding world.
    GenSynth(GenSynthArgs),
    /// Train an aligner on a manifest's parallel corpus.
    TrainAligner(TrainAlignerArgs),
    /// Train a task head, optionally through a trained aligner.
    TrainTask(TrainTaskArgs),
    /// Aligner training, task tuning and evaluation in one run.
    Pipeline(PipelineArgs),
    /// Classify target-language inputs with a reverse aligner and a
    /// source-language head.
    ReverseInfer(InferArgs),
    /// Cosine diagnostic of an aligner over paired embeddings.
    Cosine(CosineArgs),
    /// Accuracy and F1 of a head (optionally behind an aligner) on test data.
    Evaluate(InferArgs),
    /// Aligner vs identity, disjoint vs shared data.
    Ablation(PipelineArgs),
}

#[derive(Debug, Args)]
#[command(allow_negative_numbers = true)]
pub struct GenSynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub classes: Option<usize>,
    /// linear or tanh.
    #[arg(long)]
    pub kind: Option<TransformKind>,
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long)]
    pub separation: Option<f64>,
    /// Falls back to EMBEDALIGN_SEED, then 7.
    #[arg(long)]
    pub seed: Option<u64>,
}

/// Where a run reads its data and previous settings from.
#[derive(Debug, Args)]
pub struct RunInput {
    /// Dataset manifest. May instead come from the config file.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// JSON config; explicit flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

/// Training hyperparameters shared by every stage. Names follow the
/// fields of the training config.
#[derive(Debug, Default, Args)]
#[command(allow_negative_numbers = true)]
pub struct StageFlags {
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub max_epochs: Option<usize>,
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long)]
    pub val_fraction: Option<f64>,
    /// Falls back to the config file, then EMBEDALIGN_SEED, then 42.
    #[arg(long)]
    pub seed: Option<u64>,
    /// forward or reverse.
    #[arg(long)]
    pub direction: Option<Direction>,
    #[arg(long)]
    pub consistency_pairs: Option<bool>,
    #[arg(long)]
    pub freeze_aligner_in_step3: Option<bool>,
    #[arg(long)]
    pub weight_decay: Option<f64>,
    #[arg(long)]
    pub head_dropout: Option<f64>,
}

#[derive(Debug, Args)]
#[command(allow_negative_numbers = true)]
pub struct TrainAlignerArgs {
    #[command(flatten)]
    pub input: RunInput,
    /// fc, ae or identity.
    #[arg(long)]
    pub arch: Option<Arch>,
    /// Default 1e-5.
    #[arg(long)]
    pub lr: Option<f64>,
    #[command(flatten)]
    pub stage: StageFlags,
}

#[derive(Debug, Args)]
#[command(allow_negative_numbers = true)]
pub struct TrainTaskArgs {
    #[command(flatten)]
    pub input: RunInput,
    /// Aligner checkpoint to train through; omit for a plain head.
    #[arg(long)]
    pub aligner: Option<PathBuf>,
    /// Default 1e-4.
    #[arg(long)]
    pub lr: Option<f64>,
    #[command(flatten)]
    pub stage: StageFlags,
    /// Tune on the labeled source side of the aligner corpus.
    #[arg(long)]
    pub data_share: bool,
    /// Continue with a warning if task rows occur in the aligner corpus.
    #[arg(long)]
    pub allow_shared: bool,
}

#[derive(Debug, Args)]
#[command(allow_negative_numbers = true)]
pub struct PipelineArgs {
    #[command(flatten)]
    pub input: RunInput,
    /// fc, ae or identity (ablation: fc or ae).
    #[arg(long)]
    pub arch: Option<Arch>,
    /// Aligner learning rate, default 1e-5.
    #[arg(long)]
    pub aligner_lr: Option<f64>,
    /// Task-head learning rate, default 1e-4.
    #[arg(long)]
    pub task_lr: Option<f64>,
    /// Applied to both stages.
    #[command(flatten)]
    pub stage: StageFlags,
    #[arg(long)]
    pub data_share: bool,
    #[arg(long)]
    pub allow_shared: bool,
}

#[derive(Debug, Args)]
pub struct InferArgs {
    /// Supplies task_test when --input is not given.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Embedding file to classify instead of the manifest's test set.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Label file for --input.
    #[arg(long, requires = "input")]
    pub labels: Option<PathBuf>,
    #[arg(long)]
    pub aligner: Option<PathBuf>,
    #[arg(long)]
    pub head: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct CosineArgs {
    #[arg(long)]
    pub aligner: PathBuf,
    /// Uses the manifest's parallel corpus when --src/--tgt are absent.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long, requires = "tgt")]
    pub src: Option<PathBuf>,
    #[arg(long, requires = "src")]
    pub tgt: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}
