use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use symseq_core::Task;

#[derive(Parser, Debug)]
#[command(
    name = "symseq",
    version,
    about = "Generate symbolic tasks, train a Transformer on them, and score it"
)]
pub struct Cli {
    /// TOML file with per-subcommand defaults; flags take precedence.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Write a dataset of task instances, one `INPUT # OUTPUT` line each.
    Generate(GenerateArgs),
    /// Train a model on a dataset and write a checkpoint and loss CSV.
    Train(TrainArgs),
    /// Greedy-decode a dataset with a checkpoint and report success rates.
    Eval(EvalArgs),
    /// Draw loss CSVs as an SVG line chart.
    Plot(PlotArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum TaskArg {
    Factorization,
    ProdZ,
    ProdF7,
    ProdF7Cot,
}

impl From<TaskArg> for Task {
    fn from(t: TaskArg) -> Task {
        match t {
            TaskArg::Factorization => Task::Factorization,
            TaskArg::ProdZ => Task::ProdZ,
            TaskArg::ProdF7 => Task::ProdF7,
            TaskArg::ProdF7Cot => Task::ProdF7Cot,
        }
    }
}

#[derive(Args, Debug)]
pub struct GenerateArgs {
    /// Which task to draw instances of.
    #[arg(long, value_enum)]
    pub task: Option<TaskArg>,
    /// Number of samples.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub n: Option<u64>,
    /// Dataset seed; sample i depends only on (seed, i).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Dataset file; a `.meta.json` sidecar and a manifest are written next to it.
    #[arg(long, value_name = "PATH")]
    pub out: PathBuf,
    /// Worker threads; the output does not depend on this.
    #[arg(long, env = "SYMSEQ_WORKERS", value_parser = clap::value_parser!(u64).range(1..))]
    pub workers: Option<u64>,
    /// Polynomial factors per instance.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub factors: Option<u64>,
    /// Maximum total degree of each factor.
    #[arg(long)]
    pub max_degree: Option<u32>,
    /// Maximum number of terms of each factor.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub max_terms: Option<u64>,
    /// Number of polynomial variables.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub num_vars: Option<u64>,
    /// Fewest primes per factorization instance.
    #[arg(long)]
    pub min_primes: Option<u64>,
    /// Most primes per factorization instance.
    #[arg(long)]
    pub max_primes: Option<u64>,
    /// Primes are drawn below this bound.
    #[arg(long)]
    pub prime_bound: Option<u64>,
    /// Longest allowed token sequence; longer draws are rejected.
    #[arg(long)]
    pub max_seq_len: Option<u64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Profile {
    /// Desk-scale defaults.
    Default,
    /// Small overfit run on a generated 512-sample set; checks that the
    /// model memorizes it.
    Smoke,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Training dataset; optional only with `--profile smoke`.
    #[arg(long, value_name = "PATH")]
    pub data: Option<PathBuf>,
    /// Task of the dataset when it has no metadata sidecar.
    #[arg(long, value_enum)]
    pub task: Option<TaskArg>,
    /// Directory for the checkpoint, loss CSV and manifest.
    #[arg(long, value_name = "DIR")]
    pub out_dir: PathBuf,
    /// Preset model and training settings; other flags override it.
    #[arg(long, value_enum, default_value = "default")]
    pub profile: Profile,
    /// Continue from a checkpoint that has optimizer state.
    #[arg(long, value_name = "PATH")]
    pub resume: Option<PathBuf>,
    /// Overwrite existing outputs in `--out-dir`.
    #[arg(long)]
    pub force: bool,

    /// Total optimizer updates.
    #[arg(long)]
    pub steps: Option<u64>,
    /// Samples per update.
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Peak learning rate, decayed linearly to 0.
    #[arg(long)]
    pub lr: Option<f64>,
    /// Seed for initialization, shuffling and dropout.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Decoupled AdamW weight decay.
    #[arg(long)]
    pub weight_decay: Option<f64>,
    /// Dropout probability.
    #[arg(long)]
    pub dropout: Option<f64>,
    /// Clip the global gradient norm to this value.
    #[arg(long)]
    pub clip_norm: Option<f64>,
    /// Append a loss row every this many steps.
    #[arg(long)]
    pub log_every: Option<u64>,
    /// Save `step-N.ckpt` every this many steps (0: only the final one).
    #[arg(long)]
    pub checkpoint_every: Option<u64>,
    /// Score this many training samples after training (0: skip).
    #[arg(long)]
    pub eval_subset: Option<usize>,

    /// Model width.
    #[arg(long)]
    pub d_model: Option<usize>,
    /// Attention heads.
    #[arg(long)]
    pub heads: Option<usize>,
    /// Encoder layers.
    #[arg(long)]
    pub enc_layers: Option<usize>,
    /// Decoder layers.
    #[arg(long)]
    pub dec_layers: Option<usize>,
    /// Feed-forward hidden width.
    #[arg(long)]
    pub d_ffn: Option<usize>,
    /// Longest sequence the model accepts.
    #[arg(long)]
    pub max_len: Option<usize>,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// Checkpoint to score.
    #[arg(long, value_name = "PATH")]
    pub ckpt: PathBuf,
    /// Dataset to decode.
    #[arg(long, value_name = "PATH")]
    pub data: PathBuf,
    /// Task of the dataset when it has no metadata sidecar.
    #[arg(long, value_enum)]
    pub task: Option<TaskArg>,
    /// JSON report path; a manifest is written next to it.
    #[arg(long, value_name = "PATH")]
    pub report: PathBuf,
    /// Include input, reference, prediction and verdict of every sample.
    #[arg(long)]
    pub per_sample: bool,
    /// Score only the first N samples.
    #[arg(long)]
    pub limit: Option<usize>,
    /// Worker threads; the report does not depend on this.
    #[arg(long, env = "SYMSEQ_WORKERS", value_parser = clap::value_parser!(u64).range(1..))]
    pub workers: Option<u64>,
    /// Sequences decoded together.
    #[arg(long)]
    pub batch_size: Option<usize>,
}

#[derive(Args, Debug)]
pub struct PlotArgs {
    /// Loss CSV (`step,lr,loss,seconds`); repeat for several curves.
    #[arg(long = "log", value_name = "PATH", required = true)]
    pub logs: Vec<PathBuf>,
    /// SVG output path.
    #[arg(long, value_name = "PATH")]
    pub out: PathBuf,
    /// Chart title.
    #[arg(long)]
    pub title: Option<String>,
}
