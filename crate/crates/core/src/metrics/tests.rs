use super::*;
use crate::corpus::{batchify, TokenMode, Vocabulary};
use crate::factor::SemiNmfOptions;
use crate::lstm::{LstmLm, ModelConfig, Recurrence, TrainOptions};
use crate::pipeline::{fit, FitOptions, Method, Scope, Target};
use crate::tensor::{flops, singular_values};
use crate::Error;

fn model(text: &str, h: usize, layers: usize, seed: u64) -> LstmLm<f32> {
    let vocab = Vocabulary::build(text, TokenMode::Char, 1).unwrap();
    let cfg = ModelConfig {
        vocab_size: vocab.len(),
        emb_dim: h,
        hidden_dim: h,
        num_layers: layers,
        tied: false,
    };
    LstmLm::new_random(cfg, vocab, seed).unwrap()
}

#[test]
fn efficiency_examples() {
    let e = efficiency(58.3, 59.34, 24e6, 18e6, true).unwrap();
    assert!((e - 0.0701).abs() < 1e-4, "{e}");
    let direct = ((59.34 - 58.3) / 59.34) / ((24e6 - 18e6) / 24e6);
    assert!((e - direct).abs() < 1e-12);
    assert_eq!(efficiency(58.3, 58.3, 24e6, 18e6, true).unwrap(), 0.0);
    assert!(efficiency(58.3, 57.0, 24e6, 18e6, true).unwrap() < 0.0);
    assert!(efficiency(0.9, 0.95, 10.0, 5.0, false).unwrap() < 0.0);
    assert!(efficiency(0.9, 0.85, 10.0, 5.0, false).unwrap() > 0.0);
    assert!(matches!(efficiency(58.3, 59.0, 18e6, 18e6, true), Err(Error::DegenerateCompression { .. })));
    assert!(efficiency(-1.0, 59.0, 24e6, 18e6, true).is_err());
}

#[test]
fn zero_model_perplexity_is_vocab_size() {
    let mut m = model("abcdefg\n", 4, 1, 0);
    for p in m.params_mut() {
        p.iter_mut().for_each(|x| *x = 0.0);
    }
    let ids = m.vocab().encode(&"abcdefg\n".repeat(5));
    let r = perplexity(&m, &batchify(&ids, 2, 5).unwrap()).unwrap();
    assert!((r.perplexity - m.config().vocab_size as f64).abs() < 1e-4);
    assert_eq!(r.tokens, 2 * (ids.len() / 2 - 1));
}

#[test]
fn perplexity_independent_of_window_length() {
    let text = "the cat sat on the mat\n".repeat(6);
    let m = model(&text, 8, 2, 1);
    let ids = m.vocab().encode(&text);
    let a = perplexity(&m, &batchify(&ids, 3, 4).unwrap()).unwrap();
    let b = perplexity(&m, &batchify(&ids, 3, 8).unwrap()).unwrap();
    assert!((a.perplexity - b.perplexity).abs() < 1e-4);
    assert_eq!(a.tokens, b.tokens);
}

#[test]
fn perplexity_rejects_foreign_ids() {
    let m = model("ab\n", 4, 1, 0);
    let corpus = batchify(&[0, 1, 2, 9, 1, 2], 1, 2).unwrap();
    assert!(matches!(perplexity(&m, &corpus), Err(Error::Vocab(_))));
}

#[test]
fn memorizes_two_token_corpus() {
    let text = "ab".repeat(300);
    let m = model(&text, 16, 1, 2);
    let ids = m.vocab().encode(&text);
    let corpus = batchify(&ids, 4, 10).unwrap();
    let opts = FitOptions {
        train: TrainOptions {
            lr: 1.0,
            clip: 1.0,
            dropout: 0.0,
            ..TrainOptions::default()
        },
        anneal: 1.0,
        seed: 0,
    };
    let out = fit(&m, &corpus, &corpus, 10, &opts, |_| {}).unwrap();
    let ppl = perplexity(&out.model, &corpus).unwrap().perplexity;
    assert!(ppl <= 1.05, "{ppl}");
}

#[test]
fn timing_summary() {
    let t = Timing::from_samples(vec![3.0, 1.0, 2.0, 10.0]);
    assert_eq!(t.ms_median, 2.5);
    assert_eq!(t.ms_mean, 4.0);
    assert!((t.ms_std - (((1.0f64 + 9.0 + 4.0 + 36.0) / 4.0).sqrt())).abs() < 1e-12);
    assert_eq!(Timing::from_samples(vec![2.0, 4.0, 6.0]).speedup_over(&Timing::from_samples(vec![8.0, 8.0, 8.0])), 2.0);
}

#[test]
fn bench_rejects_too_few_repetitions() {
    let text = "abc\n".repeat(10);
    let m = model(&text, 4, 1, 0);
    let corpus = batchify(&m.vocab().encode(&text), 2, 4).unwrap();
    assert!(bench_inference(&m, &corpus, 2, 1, None).is_err());
    assert!(bench_inference(&m, &corpus, 3, 0, None).is_err());
    let t = bench_inference(&m, &corpus, 3, 1, Some(2)).unwrap();
    assert_eq!(t.samples.len(), 3);
    assert!(t.ms_mean > 0.0);
}

#[test]
fn matvec_flop_ratio_is_exact() {
    let b = bench_matvec(64, 48, 4, 2, 3, 1, 0).unwrap();
    assert_eq!(b.flop_ratio, (64.0 * 48.0) / (4.0 * 112.0));
    flops::reset();
    let _ = bench_matvec(64, 48, 4, 2, 3, 1, 0).unwrap();
    // 4 runs of 2 products each, dense then factorized.
    assert_eq!(flops::read(), 8 * (64 * 48 + 4 * 112) as u64);
}

fn sweep_opts(ranks: Vec<usize>, granularity: Granularity) -> SweepOptions {
    SweepOptions {
        ranks,
        methods: vec![Method::Svd, Method::SemiNmf, Method::Prune],
        targets: vec![Target::Wi, Target::Wh],
        scope: Scope::PerGate,
        granularity,
        semi_nmf: SemiNmfOptions::default(),
    }
}

#[test]
fn norm_sweep_rows_and_properties() {
    let text = "hello world, hello there\n".repeat(4);
    let m = model(&text, 8, 2, 3);
    let rows = norm_sweep(&m, &sweep_opts(vec![1, 3, 8], Granularity::Slot), None).unwrap();
    assert_eq!(rows.len(), 3 * 3 * 2 + 2);
    let base = |t: Target| rows.iter().find(|r| r.rank.is_none() && r.target == t).unwrap();
    for r in rows.iter().filter(|r| r.rank.is_some()) {
        let b = base(r.target);
        assert_eq!(r.params_before, b.params_before);
        match r.method.unwrap() {
            Method::Prune => assert!(r.norms.l1 <= b.norms.l1 + 1e-9),
            Method::Svd if r.rank == Some(8) => {
                for (x, y) in [(r.norms.l1, b.norms.l1), (r.norms.l1_std, b.norms.l1_std), (r.norms.nuclear, b.norms.nuclear)] {
                    assert!((x - y).abs() <= 1e-3 * y, "{x} vs {y}");
                }
            }
            Method::Svd => {
                let rank = r.rank.unwrap();
                let mut want = 0.0;
                for l in 0..2 {
                    let w = m.slot(l, if r.target == Target::Wi { Recurrence::Wi } else { Recurrence::Wh }).effective();
                    for g in 0..4 {
                        want += singular_values(&w.row_block(8 * g, 8)).unwrap()[..rank].iter().sum::<f64>();
                    }
                }
                // The nuclear norm of a stacked slot is at most the sum over
                // its gate blocks.
                assert!(r.norms.nuclear <= want * (1.0 + 1e-3));
            }
            Method::SemiNmf => {}
        }
    }

    let mut out = Vec::new();
    write_csv(&rows, None, &mut out).unwrap();
    let text = String::from_utf8(out).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), CSV_HEADER_REDUCED);
    for line in lines {
        let cells: Vec<_> = line.split(',').collect();
        assert_eq!(cells.len(), 11);
        assert!(cells.iter().all(|c| !c.is_empty() && *c != "-"));
    }
}

#[test]
fn gate_granularity_truncated_nuclear_matches_partial_sums() {
    let text = "norms per gate\n".repeat(4);
    let m = model(&text, 6, 1, 4);
    let mut opts = sweep_opts(vec![2], Granularity::Gate);
    opts.methods = vec![Method::Svd];
    opts.targets = vec![Target::Wh];
    let rows = norm_sweep(&m, &opts, None).unwrap();
    // Baseline and one compression, each with 5 gate views plus the aggregate.
    assert_eq!(rows.len(), 2 * 6);
    let w = m.slot(0, Recurrence::Wh).effective();
    for (g, gate) in [Gate::I, Gate::F, Gate::O, Gate::C].into_iter().enumerate() {
        let r = rows.iter().find(|r| r.rank == Some(2) && r.layer == Some(0) && r.gate == gate).unwrap();
        let want: f64 = singular_values(&w.row_block(6 * g, 6)).unwrap()[..2].iter().sum();
        assert!((r.norms.nuclear - want).abs() <= 1e-3 * want, "{} vs {want}", r.norms.nuclear);
    }
    assert!(rows.iter().any(|r| r.rank.is_none() && r.layer.is_none() && r.gate == Gate::All));
}

#[test]
fn both_target_views_concatenate() {
    let text = "abcd\n".repeat(4);
    let m = model(&text, 4, 1, 5);
    let mut opts = sweep_opts(vec![1], Granularity::Slot);
    opts.targets = vec![Target::Both, Target::Wi, Target::Wh];
    opts.methods = vec![Method::Prune];
    let rows = norm_sweep(&m, &opts, None).unwrap();
    let l1 = |t| rows.iter().find(|r| r.rank.is_none() && r.target == t).unwrap().norms.l1;
    assert!((l1(Target::Both) - l1(Target::Wi) - l1(Target::Wh)).abs() < 1e-6);
}

#[test]
fn sweep_with_evaluation_uses_full_schema() {
    let text = "evaluate the sweep please\n".repeat(8);
    let m = model(&text, 8, 1, 6);
    let corpus = batchify(&m.vocab().encode(&text), 2, 8).unwrap();
    let mut opts = sweep_opts(vec![1, 2], Granularity::Slot);
    opts.targets = vec![Target::Wh];
    let eval = SweepEval {
        valid: &corpus,
        finetune: None,
        repetitions: 3,
        warmup: 1,
        max_windows: Some(2),
    };
    let rows = norm_sweep(&m, &opts, Some(&eval)).unwrap();
    assert_eq!(rows.len(), 2 * 3 + 1);
    let base = rows[0].measured.unwrap();
    assert_eq!(base.e_r, 0.0);
    for r in &rows[1..] {
        let got = r.measured.unwrap();
        let want = efficiency(base.ppl, got.ppl, r.params_before as f64, r.params_after as f64, true).unwrap();
        assert_eq!(got.e_r, want);
    }
    let mut out = Vec::new();
    write_csv(&rows, Some("test"), &mut out).unwrap();
    let text = String::from_utf8(out).unwrap();
    let lines: Vec<_> = text.lines().collect();
    assert_eq!(lines[0], "# machine: test");
    assert_eq!(lines[1], CSV_HEADER);
    assert!(lines[2].starts_with("full,baseline,w_h,per-gate,all,all,"));
    assert!(lines[2..].iter().all(|l| l.split(',').count() == 15));

    // Ranks that do not save parameters are not allowed when E(r) is computed.
    let opts = SweepOptions {
        ranks: vec![4],
        ..opts
    };
    assert!(matches!(norm_sweep(&m, &opts, Some(&eval)), Err(Error::DegenerateCompression { .. })));
}

#[test]
fn feasible_ranks_drop_non_saving_ranks() {
    let text = "abc\n".repeat(4);
    let m = model(&text, 16, 1, 0);
    let ranks = feasible_ranks(&m, &DEFAULT_RANKS, &[Target::Wh], Scope::PerGate);
    assert!(ranks.is_empty());
    let ranks = feasible_ranks(&m, &[1, 7, 8, 16, 17], &[Target::Wh], Scope::PerGate);
    assert_eq!(ranks, vec![1, 7]);
    let ranks = feasible_ranks(&m, &[1, 10, 12, 13], &[Target::Wh], Scope::Stacked);
    assert_eq!(ranks, vec![1, 10, 12]);
}
