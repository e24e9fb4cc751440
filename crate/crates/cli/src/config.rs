//! Resolved run configurations. Each command's flags are merged over an
//! optional `--config` file, which is merged over the defaults.

use std::path::PathBuf;

use lrlstm_core::corpus::TokenMode;
use lrlstm_core::metrics::Granularity;
use lrlstm_core::pipeline::{Method, Scope, Target};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "lowercase")]
pub enum RunConfig {
    Train(TrainConfig),
    Compress(CompressConfig),
    Finetune(FinetuneConfig),
    Eval(EvalConfig),
    Sweep(SweepConfig),
    Bench(BenchConfig),
    Norms(NormsConfig),
}

impl RunConfig {
    pub fn name(&self) -> &'static str {
        match self {
            RunConfig::Train(_) => "train",
            RunConfig::Compress(_) => "compress",
            RunConfig::Finetune(_) => "finetune",
            RunConfig::Eval(_) => "eval",
            RunConfig::Sweep(_) => "sweep",
            RunConfig::Bench(_) => "bench",
            RunConfig::Norms(_) => "norms",
        }
    }
}

/// How a text file becomes train/valid/test batches.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub corpus: Option<PathBuf>,
    pub mode: TokenMode,
    pub min_count: usize,
    pub valid_frac: f64,
    pub test_frac: f64,
    pub batch_size: usize,
    pub eval_batch_size: usize,
    pub bptt: usize,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            corpus: None,
            mode: TokenMode::Char,
            min_count: 1,
            valid_frac: 0.1,
            test_frac: 0.1,
            batch_size: 32,
            eval_batch_size: 10,
            bptt: 35,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainerConfig {
    pub epochs: usize,
    pub lr: f64,
    pub clip: f64,
    pub dropout: f64,
    pub anneal: f64,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        Self {
            epochs: 5,
            lr: 1.0,
            clip: 0.25,
            dropout: 0.2,
            anneal: 4.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub data: DataConfig,
    pub trainer: TrainerConfig,
    pub layers: usize,
    pub dim: usize,
    /// Defaults to `dim`.
    pub emb_dim: Option<usize>,
    pub tied: bool,
    pub seed: u64,
    pub out: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            data: DataConfig::default(),
            trainer: TrainerConfig::default(),
            layers: 2,
            dim: 128,
            emb_dim: None,
            tied: false,
            seed: 0,
            out: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompressConfig {
    pub input: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub method: Method,
    pub target: Target,
    pub scope: Scope,
    pub rank: Option<usize>,
    pub layers: Option<Vec<usize>>,
    pub nmf_iters: usize,
    pub nmf_tol: f64,
    pub seed: u64,
}

impl Default for CompressConfig {
    fn default() -> Self {
        Self {
            input: None,
            out: None,
            method: Method::Svd,
            target: Target::Wh,
            scope: Scope::PerGate,
            rank: None,
            layers: None,
            nmf_iters: 200,
            nmf_tol: 1e-4,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FinetuneConfig {
    pub input: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub data: DataConfig,
    pub trainer: TrainerConfig,
    pub seed: u64,
}

impl Default for FinetuneConfig {
    fn default() -> Self {
        Self {
            input: None,
            out: None,
            data: DataConfig::default(),
            trainer: TrainerConfig {
                epochs: 2,
                ..TrainerConfig::default()
            },
            seed: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    #[default]
    Valid,
    Test,
    Train,
}

impl std::str::FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "valid" => Ok(Split::Valid),
            "test" => Ok(Split::Test),
            "train" => Ok(Split::Train),
            _ => Err(format!("unknown split {s:?} (expected valid, test or train)")),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub input: Option<PathBuf>,
    pub data: DataConfig,
    pub split: Split,
    pub out: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub input: Option<PathBuf>,
    pub out: Option<PathBuf>,
    /// `None` uses the default grid restricted to feasible, saving ranks.
    pub ranks: Option<Vec<usize>>,
    pub methods: Vec<Method>,
    pub targets: Vec<Target>,
    pub scope: Scope,
    pub granularity: Granularity,
    pub no_eval: bool,
    pub data: DataConfig,
    pub finetune_epochs: usize,
    pub trainer: TrainerConfig,
    pub repetitions: usize,
    pub warmup: usize,
    pub max_windows: Option<usize>,
    pub nmf_iters: usize,
    pub nmf_tol: f64,
    pub seed: u64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            input: None,
            out: None,
            ranks: None,
            methods: vec![Method::Svd, Method::SemiNmf, Method::Prune],
            targets: vec![Target::Wi, Target::Wh],
            scope: Scope::PerGate,
            granularity: Granularity::Slot,
            no_eval: false,
            data: DataConfig::default(),
            finetune_epochs: 0,
            trainer: TrainerConfig::default(),
            repetitions: 5,
            warmup: 1,
            max_windows: None,
            nmf_iters: 200,
            nmf_tol: 1e-4,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    pub baseline: Option<PathBuf>,
    pub candidate: Option<PathBuf>,
    pub data: DataConfig,
    pub split: Split,
    pub matvec: bool,
    pub rows: usize,
    pub cols: usize,
    pub rank: usize,
    pub iters: usize,
    pub repetitions: usize,
    pub warmup: usize,
    pub max_windows: Option<usize>,
    pub seed: u64,
    pub out: Option<PathBuf>,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            baseline: None,
            candidate: None,
            data: DataConfig::default(),
            split: Split::Valid,
            matvec: false,
            rows: 1024,
            cols: 1024,
            rank: 64,
            iters: 200,
            repetitions: 5,
            warmup: 1,
            max_windows: None,
            seed: 0,
            out: None,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NormsConfig {
    pub input: Option<PathBuf>,
    pub dump: Option<PathBuf>,
}
