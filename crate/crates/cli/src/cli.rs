//! Flag definitions. Every value flag is optional so that unset flags fall
//! through to the config file and then to the defaults.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use lrlstm_core::corpus::TokenMode;
use lrlstm_core::metrics::Granularity;
use lrlstm_core::pipeline::{Method, Scope, Target};

use crate::config::{
    BenchConfig, CompressConfig, DataConfig, EvalConfig, FinetuneConfig, NormsConfig, Split, SweepConfig, TrainConfig,
    TrainerConfig,
};

#[derive(Parser, Debug)]
#[command(name = "lrlstm", version, about = "Train, compress and analyse LSTM language models")]
pub struct Cli {
    /// JSON run configuration (as written next to earlier outputs); explicit
    /// flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Train a model from scratch and save the best-validation checkpoint.
    Train(TrainArgs),
    /// Replace LSTM recurrence matrices with factorized or pruned forms.
    Compress(CompressArgs),
    /// Continue training a (compressed) checkpoint.
    Finetune(FinetuneArgs),
    /// Report perplexity of a checkpoint on a corpus split.
    Eval(EvalArgs),
    /// Compress over a rank grid and write norm/perplexity rows as CSV.
    Sweep(SweepArgs),
    /// Time inference of two checkpoints, or a dense vs factorized matvec.
    Bench(BenchArgs),
    /// Print norms of every recurrence matrix, optionally dumping them.
    Norms(NormsArgs),
}

macro_rules! merge {
    ($cfg:expr, $args:expr; $($field:ident),+ $(,)?) => {
        $(if let Some(v) = $args.$field.clone() {
            $cfg.$field = v;
        })+
    };
}

macro_rules! merge_opt {
    ($cfg:expr, $args:expr; $($field:ident),+ $(,)?) => {
        $(if $args.$field.is_some() {
            $cfg.$field = $args.$field.clone();
        })+
    };
}

#[derive(Args, Debug, Clone)]
pub struct DataArgs {
    /// Plain-text corpus.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Tokenization: char or word.
    #[arg(long)]
    pub mode: Option<TokenMode>,
    #[arg(long)]
    pub min_count: Option<usize>,
    #[arg(long)]
    pub valid_frac: Option<f64>,
    #[arg(long)]
    pub test_frac: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub eval_batch_size: Option<usize>,
    /// Truncated-BPTT window length.
    #[arg(long)]
    pub bptt: Option<usize>,
}

impl DataArgs {
    fn apply(&self, cfg: &mut DataConfig) {
        merge_opt!(cfg, self; corpus);
        merge!(cfg, self; mode, min_count, valid_frac, test_frac, batch_size, eval_batch_size, bptt);
    }
}

#[derive(Args, Debug, Clone)]
pub struct TrainerArgs {
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    /// Global gradient-norm ceiling (0 disables clipping).
    #[arg(long)]
    pub clip: Option<f64>,
    #[arg(long)]
    pub dropout: Option<f64>,
    /// Learning-rate divisor applied after an epoch without validation gain.
    #[arg(long)]
    pub anneal: Option<f64>,
}

impl TrainerArgs {
    fn apply(&self, cfg: &mut TrainerConfig) {
        merge!(cfg, self; epochs, lr, clip, dropout, anneal);
    }
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub trainer: TrainerArgs,
    #[arg(long)]
    pub layers: Option<usize>,
    /// Hidden size of every layer.
    #[arg(long)]
    pub dim: Option<usize>,
    /// Embedding size (defaults to --dim).
    #[arg(long)]
    pub emb_dim: Option<usize>,
    /// Share the embedding matrix with the decoder.
    #[arg(long)]
    pub tied: bool,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Checkpoint directory to create.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl TrainArgs {
    pub fn apply(&self, cfg: &mut TrainConfig) {
        self.data.apply(&mut cfg.data);
        self.trainer.apply(&mut cfg.trainer);
        merge!(cfg, self; layers, dim, seed);
        merge_opt!(cfg, self; emb_dim, out);
        cfg.tied |= self.tied;
    }
}

#[derive(Args, Debug)]
pub struct CompressArgs {
    /// Input checkpoint directory.
    #[arg(long = "in")]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// svd, semi-nmf or prune.
    #[arg(long)]
    pub method: Option<Method>,
    /// w_i, w_h or both.
    #[arg(long)]
    pub target: Option<Target>,
    /// per-gate or stacked.
    #[arg(long)]
    pub scope: Option<Scope>,
    #[arg(long)]
    pub rank: Option<usize>,
    /// Comma-separated layer indices (default: all).
    #[arg(long, value_delimiter = ',')]
    pub layers: Option<Vec<usize>>,
    #[arg(long)]
    pub nmf_iters: Option<usize>,
    #[arg(long)]
    pub nmf_tol: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
}

impl CompressArgs {
    pub fn apply(&self, cfg: &mut CompressConfig) {
        merge_opt!(cfg, self; input, out, rank, layers);
        merge!(cfg, self; method, target, scope, nmf_iters, nmf_tol, seed);
    }
}

#[derive(Args, Debug)]
pub struct FinetuneArgs {
    #[arg(long = "in")]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub trainer: TrainerArgs,
    #[arg(long)]
    pub seed: Option<u64>,
}

impl FinetuneArgs {
    pub fn apply(&self, cfg: &mut FinetuneConfig) {
        merge_opt!(cfg, self; input, out);
        self.data.apply(&mut cfg.data);
        self.trainer.apply(&mut cfg.trainer);
        merge!(cfg, self; seed);
    }
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long = "in")]
    pub input: Option<PathBuf>,
    #[command(flatten)]
    pub data: DataArgs,
    /// valid, test or train.
    #[arg(long)]
    pub split: Option<Split>,
    /// Also write the result as JSON to this file.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl EvalArgs {
    pub fn apply(&self, cfg: &mut EvalConfig) {
        merge_opt!(cfg, self; input, out);
        self.data.apply(&mut cfg.data);
        merge!(cfg, self; split);
    }
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    #[arg(long = "in")]
    pub input: Option<PathBuf>,
    /// CSV output path (default: stdout).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    pub ranks: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    pub methods: Option<Vec<Method>>,
    #[arg(long, value_delimiter = ',')]
    pub targets: Option<Vec<Target>>,
    #[arg(long)]
    pub scope: Option<Scope>,
    /// slot (one row per compressed model) or gate (rows per layer and gate).
    #[arg(long)]
    pub granularity: Option<Granularity>,
    /// Skip perplexity, E(r) and timing; writes the reduced CSV schema.
    #[arg(long)]
    pub no_eval: bool,
    #[command(flatten)]
    pub data: DataArgs,
    /// Fine-tune each compressed model for this many epochs before evaluation.
    #[arg(long)]
    pub finetune_epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub repetitions: Option<usize>,
    #[arg(long)]
    pub warmup: Option<usize>,
    /// Time only the first N windows of the evaluation split.
    #[arg(long)]
    pub max_windows: Option<usize>,
    #[arg(long)]
    pub nmf_iters: Option<usize>,
    #[arg(long)]
    pub nmf_tol: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
}

impl SweepArgs {
    pub fn apply(&self, cfg: &mut SweepConfig) {
        merge_opt!(cfg, self; input, out, ranks, max_windows);
        merge!(cfg, self; methods, targets, scope, granularity, finetune_epochs, repetitions, warmup, nmf_iters, nmf_tol, seed);
        self.data.apply(&mut cfg.data);
        if let Some(lr) = self.lr {
            cfg.trainer.lr = lr;
        }
        cfg.no_eval |= self.no_eval;
    }
}

#[derive(Args, Debug)]
pub struct BenchArgs {
    /// Reference checkpoint.
    #[arg(long)]
    pub baseline: Option<PathBuf>,
    /// Checkpoint to compare against the baseline.
    #[arg(long)]
    pub candidate: Option<PathBuf>,
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub split: Option<Split>,
    /// Time a dense matrix-vector product against its factorized form instead.
    #[arg(long)]
    pub matvec: bool,
    #[arg(long)]
    pub rows: Option<usize>,
    #[arg(long)]
    pub cols: Option<usize>,
    #[arg(long)]
    pub rank: Option<usize>,
    /// Products per timed repetition in --matvec mode.
    #[arg(long)]
    pub iters: Option<usize>,
    #[arg(long)]
    pub repetitions: Option<usize>,
    #[arg(long)]
    pub warmup: Option<usize>,
    #[arg(long)]
    pub max_windows: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Also write the result as JSON to this file.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl BenchArgs {
    pub fn apply(&self, cfg: &mut BenchConfig) {
        merge_opt!(cfg, self; baseline, candidate, max_windows, out);
        self.data.apply(&mut cfg.data);
        merge!(cfg, self; split, rows, cols, rank, iters, repetitions, warmup, seed);
        cfg.matvec |= self.matvec;
    }
}

#[derive(Args, Debug)]
pub struct NormsArgs {
    #[arg(long = "in")]
    pub input: Option<PathBuf>,
    /// Directory to write each effective recurrence matrix to as CSV.
    #[arg(long)]
    pub dump: Option<PathBuf>,
}

impl NormsArgs {
    pub fn apply(&self, cfg: &mut NormsConfig) {
        merge_opt!(cfg, self; input, dump);
    }
}
