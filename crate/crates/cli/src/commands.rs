use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use lrlstm_core::corpus::{batchify, split_stream, BatchedCorpus, Vocabulary};
use lrlstm_core::lstm::{LstmLm, ModelConfig, Recurrence, TrainOptions};
use lrlstm_core::metrics::{
    bench_inference, bench_matvec, feasible_ranks, machine_info, norm_sweep, perplexity, write_csv, SweepEval,
    SweepOptions, DEFAULT_RANKS,
};
use lrlstm_core::factor::SemiNmfOptions;
use lrlstm_core::pipeline::{compress_model, fit, load_checkpoint, save_checkpoint, CompressionSpec, EpochRecord, FitOptions};
use lrlstm_core::tensor::{norm_stats, sub_seeds};
use serde::Serialize;
use serde_json::json;

use crate::config::{
    BenchConfig, CompressConfig, DataConfig, EvalConfig, FinetuneConfig, NormsConfig, RunConfig, Split, SweepConfig,
    TrainConfig, TrainerConfig,
};
use crate::Failure;

pub const RUN_CONFIG_FILE: &str = "run_config.json";

fn required<T: Clone>(value: &Option<T>, flag: &str) -> Result<T, Failure> {
    value.clone().ok_or_else(|| Failure::Usage(format!("missing required --{flag} (flag or config file)")))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), Failure> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Failure::Other(e.to_string()))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Failure::io(path, e))
}

/// `<dir>/run_config.json` for directory outputs.
fn save_run_config(dir: &Path, cfg: &RunConfig) -> Result<(), Failure> {
    write_json(&dir.join(RUN_CONFIG_FILE), cfg)
}

/// `<file>.config.json` for single-file outputs.
fn sidecar(path: &Path) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".config.json");
    path.with_file_name(name)
}

fn read_text(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::io(path, e))
}

struct Splits {
    train: Vec<u32>,
    valid: Vec<u32>,
    test: Vec<u32>,
}

fn split_corpus(vocab: &Vocabulary, text: &str, data: &DataConfig) -> Splits {
    let ids = vocab.encode(text);
    let (train, valid, test) = split_stream(&ids, data.valid_frac, data.test_frac);
    Splits { train, valid, test }
}

impl Splits {
    fn batched(&self, split: Split, data: &DataConfig) -> Result<BatchedCorpus, Failure> {
        let (ids, batch) = match split {
            Split::Train => (&self.train, data.batch_size),
            Split::Valid => (&self.valid, data.eval_batch_size),
            Split::Test => (&self.test, data.eval_batch_size),
        };
        Ok(batchify(ids, batch, data.bptt)?)
    }
}

fn fit_options(trainer: &TrainerConfig, seed: u64) -> FitOptions {
    FitOptions {
        train: TrainOptions {
            lr: trainer.lr,
            clip: trainer.clip,
            dropout: trainer.dropout,
            ..TrainOptions::default()
        },
        anneal: trainer.anneal,
        seed,
    }
}

fn run_fit(
    model: &LstmLm,
    splits: &Splits,
    data: &DataConfig,
    trainer: &TrainerConfig,
    seed: u64,
    log_path: &Path,
) -> Result<(LstmLm, Option<f64>), Failure> {
    let mut log = BufWriter::new(File::create(log_path).map_err(|e| Failure::io(log_path, e))?);
    if trainer.epochs == 0 {
        log.flush().map_err(|e| Failure::io(log_path, e))?;
        return Ok((model.clone(), None));
    }
    let train = splits.batched(Split::Train, data)?;
    let valid = splits.batched(Split::Valid, data)?;
    let mut log_err = None;
    let outcome = fit(model, &train, &valid, trainer.epochs, &fit_options(trainer, seed), |r: &EpochRecord| {
        eprintln!(
            "epoch {:>3}  train ppl {:>9.3}  valid ppl {:>9.3}  lr {:.4}  {:.1}s",
            r.epoch, r.train_ppl, r.valid_ppl, r.lr, r.seconds
        );
        let line = serde_json::to_string(r).expect("record serializes");
        if let Err(e) = writeln!(log, "{line}").and_then(|_| log.flush()) {
            log_err.get_or_insert(e);
        }
    });
    if let Some(e) = log_err {
        return Err(Failure::io(log_path, e));
    }
    let outcome = outcome?;
    Ok((outcome.model, outcome.best_valid_ppl))
}

fn create_dir(dir: &Path) -> Result<(), Failure> {
    fs::create_dir_all(dir).map_err(|e| Failure::io(dir, e))
}

pub fn train(cfg: &TrainConfig) -> Result<(), Failure> {
    let corpus = required(&cfg.data.corpus, "corpus")?;
    let out = required(&cfg.out, "out")?;
    let text = read_text(&corpus)?;
    let vocab = Vocabulary::build(&text, cfg.data.mode, cfg.data.min_count)?;
    let splits = split_corpus(&vocab, &text, &cfg.data);
    let model_cfg = ModelConfig {
        vocab_size: vocab.len(),
        emb_dim: cfg.emb_dim.unwrap_or(cfg.dim),
        hidden_dim: cfg.dim,
        num_layers: cfg.layers,
        tied: cfg.tied,
    };
    let [init_seed, fit_seed] = sub_seeds(cfg.seed);
    let model = LstmLm::new_random(model_cfg, vocab, init_seed)?;
    create_dir(&out)?;
    save_run_config(&out, &RunConfig::Train(cfg.clone()))?;
    let (best, best_ppl) = run_fit(&model, &splits, &cfg.data, &cfg.trainer, fit_seed, &out.join("train_log.jsonl"))?;
    save_checkpoint(&best, &out)?;
    print_json(&json!({
        "checkpoint": out,
        "params": best.param_counts(),
        "best_valid_ppl": best_ppl,
    }))
}

pub fn compress(cfg: &CompressConfig) -> Result<(), Failure> {
    let input = required(&cfg.input, "in")?;
    let out = required(&cfg.out, "out")?;
    let rank = required(&cfg.rank, "rank")?;
    let model = load_checkpoint(&input)?;
    let mut spec = CompressionSpec::new(cfg.method, cfg.target, cfg.scope, rank);
    spec.layers = cfg.layers.clone();
    spec.semi_nmf = SemiNmfOptions {
        max_iters: cfg.nmf_iters,
        rel_tol: cfg.nmf_tol,
        seed: cfg.seed,
        ..SemiNmfOptions::default()
    };
    let (compressed, report) = compress_model(&model, &spec)?;
    for s in report.slots.iter().filter(|s| s.negative_savings()) {
        eprintln!(
            "warning: layers.{}.{} grows from {} to {} parameters at rank {rank}",
            s.layer,
            s.target.as_str(),
            s.params_before,
            s.params_after
        );
    }
    save_checkpoint(&compressed, &out)?;
    save_run_config(&out, &RunConfig::Compress(cfg.clone()))?;
    write_json(&out.join("compression_report.json"), &report)?;
    print_json(&report)
}

pub fn finetune(cfg: &FinetuneConfig) -> Result<(), Failure> {
    let input = required(&cfg.input, "in")?;
    let out = required(&cfg.out, "out")?;
    let corpus = required(&cfg.data.corpus, "corpus")?;
    let model = load_checkpoint(&input)?;
    let text = read_text(&corpus)?;
    let splits = split_corpus(model.vocab(), &text, &cfg.data);
    create_dir(&out)?;
    save_run_config(&out, &RunConfig::Finetune(cfg.clone()))?;
    let [_, fit_seed] = sub_seeds(cfg.seed);
    let (best, best_ppl) = run_fit(&model, &splits, &cfg.data, &cfg.trainer, fit_seed, &out.join("finetune_log.jsonl"))?;
    save_checkpoint(&best, &out)?;
    print_json(&json!({
        "checkpoint": out,
        "params": best.param_counts(),
        "best_valid_ppl": best_ppl,
    }))
}

pub fn eval(cfg: &EvalConfig) -> Result<(), Failure> {
    let input = required(&cfg.input, "in")?;
    let corpus = required(&cfg.data.corpus, "corpus")?;
    let model = load_checkpoint(&input)?;
    let text = read_text(&corpus)?;
    let batched = split_corpus(model.vocab(), &text, &cfg.data).batched(cfg.split, &cfg.data)?;
    let result = perplexity(&model, &batched)?;
    let value = json!({
        "split": cfg.split,
        "perplexity": result.perplexity,
        "tokens": result.tokens,
        "params": result.params,
    });
    if let Some(out) = &cfg.out {
        write_json(out, &value)?;
        write_json(&sidecar(out), &RunConfig::Eval(cfg.clone()))?;
    }
    print_json(&value)
}

pub fn sweep(cfg: &SweepConfig) -> Result<(), Failure> {
    let input = required(&cfg.input, "in")?;
    let model = load_checkpoint(&input)?;
    let ranks = match &cfg.ranks {
        Some(r) => r.clone(),
        None => {
            let r = feasible_ranks(&model, &DEFAULT_RANKS, &cfg.targets, cfg.scope);
            if r.is_empty() {
                return Err(Failure::Invalid(format!(
                    "no rank in the default grid {DEFAULT_RANKS:?} fits this model with parameter savings; pass --ranks"
                )));
            }
            r
        }
    };
    let opts = SweepOptions {
        ranks,
        methods: cfg.methods.clone(),
        targets: cfg.targets.clone(),
        scope: cfg.scope,
        granularity: cfg.granularity,
        semi_nmf: SemiNmfOptions {
            max_iters: cfg.nmf_iters,
            rel_tol: cfg.nmf_tol,
            seed: cfg.seed,
            ..SemiNmfOptions::default()
        },
    };
    let rows = if cfg.no_eval {
        norm_sweep(&model, &opts, None)?
    } else {
        let corpus = required(&cfg.data.corpus, "corpus")?;
        let text = read_text(&corpus)?;
        let splits = split_corpus(model.vocab(), &text, &cfg.data);
        let valid = splits.batched(Split::Valid, &cfg.data)?;
        let train = if cfg.finetune_epochs > 0 { Some(splits.batched(Split::Train, &cfg.data)?) } else { None };
        let [_, fit_seed] = sub_seeds(cfg.seed);
        let eval = SweepEval {
            valid: &valid,
            finetune: train.as_ref().map(|t| (t, cfg.finetune_epochs, fit_options(&cfg.trainer, fit_seed))),
            repetitions: cfg.repetitions,
            warmup: cfg.warmup,
            max_windows: cfg.max_windows,
        };
        norm_sweep(&model, &opts, Some(&eval))?
    };
    let machine = machine_info();
    match &cfg.out {
        Some(path) => {
            let file = File::create(path).map_err(|e| Failure::io(path, e))?;
            let mut w = BufWriter::new(file);
            write_csv(&rows, Some(&machine), &mut w)?;
            w.flush().map_err(|e| Failure::io(path, e))?;
            write_json(&sidecar(path), &RunConfig::Sweep(cfg.clone()))?;
            eprintln!("wrote {} rows to {}", rows.len(), path.display());
            Ok(())
        }
        None => Ok(write_csv(&rows, Some(&machine), io::stdout().lock())?),
    }
}

pub fn bench(cfg: &BenchConfig) -> Result<(), Failure> {
    let value = if cfg.matvec {
        let b = bench_matvec(cfg.rows, cfg.cols, cfg.rank, cfg.iters, cfg.repetitions, cfg.warmup, cfg.seed)?;
        json!({ "machine": machine_info(), "matvec": b })
    } else {
        let baseline_path = required(&cfg.baseline, "baseline")?;
        let candidate_path = required(&cfg.candidate, "candidate")?;
        let corpus = required(&cfg.data.corpus, "corpus")?;
        let baseline = load_checkpoint(&baseline_path)?;
        let candidate = load_checkpoint(&candidate_path)?;
        if baseline.vocab() != candidate.vocab() {
            return Err(Failure::Invalid("baseline and candidate vocabularies differ".into()));
        }
        let text = read_text(&corpus)?;
        let batched = split_corpus(baseline.vocab(), &text, &cfg.data).batched(cfg.split, &cfg.data)?;
        let b = bench_inference(&baseline, &batched, cfg.repetitions, cfg.warmup, cfg.max_windows)?;
        let c = bench_inference(&candidate, &batched, cfg.repetitions, cfg.warmup, cfg.max_windows)?;
        json!({
            "machine": machine_info(),
            "baseline": { "params": baseline.param_counts().total, "timing": b },
            "candidate": { "params": candidate.param_counts().total, "timing": c },
            "speedup": c.speedup_over(&b),
        })
    };
    if let Some(out) = &cfg.out {
        write_json(out, &value)?;
        write_json(&sidecar(out), &RunConfig::Bench(cfg.clone()))?;
    }
    print_json(&value)
}

pub fn norms(cfg: &NormsConfig) -> Result<(), Failure> {
    let input = required(&cfg.input, "in")?;
    let model = load_checkpoint(&input)?;
    if let Some(dir) = &cfg.dump {
        create_dir(dir)?;
        save_run_config(dir, &RunConfig::Norms(cfg.clone()))?;
    }
    let stdout = io::stdout();
    let mut out = stdout.lock();
    for l in 0..model.config().num_layers {
        for which in [Recurrence::Wi, Recurrence::Wh] {
            let slot = model.slot(l, which);
            let w = slot.effective();
            let stats = norm_stats(&w)?;
            let name = format!("layers.{l}.{}", which.as_str());
            let line = json!({
                "name": name,
                "kind": slot.kind(),
                "shape": w.shape(),
                "params": slot.param_count(),
                "l1": stats.l1,
                "l1_std": stats.l1_std,
                "nuclear": stats.nuclear,
            });
            writeln!(out, "{line}").map_err(|e| Failure::io("<stdout>", e))?;
            if let Some(dir) = &cfg.dump {
                let path = dir.join(format!("{name}.csv"));
                let mut f = BufWriter::new(File::create(&path).map_err(|e| Failure::io(&path, e))?);
                for i in 0..w.rows() {
                    let row: Vec<String> = w.row(i).iter().map(f32::to_string).collect();
                    writeln!(f, "{}", row.join(",")).map_err(|e| Failure::io(&path, e))?;
                }
                f.flush().map_err(|e| Failure::io(&path, e))?;
            }
        }
    }
    Ok(())
}

fn print_json(value: &impl Serialize) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Failure::Other(e.to_string()))?;
    println!("{text}");
    Ok(())
}
