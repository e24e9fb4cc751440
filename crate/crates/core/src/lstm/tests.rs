use super::*;
use crate::corpus::{batchify, TokenMode, Vocabulary, Window};
use crate::factor::{prune_magnitude, truncated_svd, FactorizedMatrix};
use crate::tensor::{flops, prng, prng_matrix, Matrix, Real};

fn vocab(v: usize) -> Vocabulary {
    let mut toks = vec!["<unk>".to_string(), "<eos>".to_string()];
    toks.extend((2..v).map(|i| format!("t{i}")));
    Vocabulary::from_tokens(TokenMode::Word, toks).unwrap()
}

fn config(v: usize, e: usize, h: usize, layers: usize, tied: bool) -> ModelConfig {
    ModelConfig {
        vocab_size: v,
        emb_dim: e,
        hidden_dim: h,
        num_layers: layers,
        tied,
    }
}

fn model<T: Real>(cfg: ModelConfig, seed: u64) -> LstmLm<T> {
    let v = vocab(cfg.vocab_size);
    LstmLm::new_random(cfg, v, seed).unwrap()
}

fn ids(n: usize, v: usize, seed: u64) -> Vec<u32> {
    let mut rng = prng(seed);
    (0..n).map(|_| (crate::tensor::unit_f64(&mut rng) * v as f64) as u32 % v as u32).collect()
}

fn window(batch: usize, len: usize, v: usize, seed: u64) -> Window {
    Window {
        input: ids(batch * len, v, seed),
        target: ids(batch * len, v, seed + 1),
        batch_size: batch,
        len,
    }
}

#[test]
fn cross_entropy_examples() {
    let (l, n) = cross_entropy(&[0.0f64; 10], &[3], 10);
    assert_eq!(n, 1);
    assert!((l - 10f64.ln()).abs() < 1e-12);
    let mut big = vec![0.0f32; 5];
    big[2] = 1000.0;
    assert!(cross_entropy(&big, &[2], 5).0.abs() < 1e-9);
    let e = std::f64::consts::E;
    assert!((cross_entropy(&[1.0f64, 0.0], &[0], 2).0 - (-(e / (e + 1.0)).ln())).abs() < 1e-9);
    assert!((cross_entropy(&[1.0f64, 0.0], &[0], 2).0 - 0.313262).abs() < 1e-6);
}

#[test]
fn zero_model_gives_zero_logits() {
    let mut m = model::<f32>(config(7, 3, 4, 1, false), 1);
    for p in m.params_mut() {
        p.iter_mut().for_each(|x| *x = 0.0);
    }
    let st = LstmState::zeros(m.config(), 2);
    let f = m.lm_forward(&ids(6, 7, 3), 2, 3, &st).unwrap();
    assert!(f.logits.iter().all(|&x| x == 0.0));
    assert!((cross_entropy(&f.logits, &ids(6, 7, 4), 7).0 - 7f64.ln()).abs() < 1e-6);
}

#[test]
fn identical_rows_give_identical_logits() {
    let m = model::<f32>(config(9, 5, 6, 2, false), 2);
    let row = ids(4, 9, 5);
    let input: Vec<u32> = row.iter().chain(&row).chain(&row).copied().collect();
    let f = m.lm_forward(&input, 3, 4, &LstmState::zeros(m.config(), 3)).unwrap();
    let per = 4 * 9;
    assert_eq!(f.logits[..per], f.logits[per..2 * per]);
    assert_eq!(f.logits[..per], f.logits[2 * per..]);
}

#[test]
fn rejects_out_of_vocab_and_bad_shapes() {
    let m = model::<f32>(config(5, 3, 4, 1, false), 3);
    let st = LstmState::zeros(m.config(), 1);
    assert!(matches!(m.lm_forward(&[0, 5], 1, 2, &st), Err(crate::Error::Vocab(_))));
    assert!(matches!(m.lm_forward(&[0, 1, 2], 1, 2, &st), Err(crate::Error::Shape(_))));
    assert!(matches!(m.lm_forward(&[0, 1], 2, 1, &st), Err(crate::Error::Shape(_))));
    assert!(LstmLm::<f32>::new_random(config(5, 3, 4, 1, true), vocab(5), 0).is_err());
}

#[test]
fn split_forward_matches_whole() {
    let m = model::<f32>(config(11, 6, 8, 2, false), 4);
    let batch = 2;
    let seq = ids(batch * 8, 11, 9);
    let st = LstmState::zeros(m.config(), batch);
    let whole = m.lm_forward(&seq, batch, 8, &st).unwrap();
    let half = |b: usize, lo: usize| seq[b * 8 + lo..b * 8 + lo + 4].to_vec();
    let first: Vec<u32> = (0..batch).flat_map(|b| half(b, 0)).collect();
    let second: Vec<u32> = (0..batch).flat_map(|b| half(b, 4)).collect();
    let a = m.lm_forward(&first, batch, 4, &st).unwrap();
    let b = m.lm_forward(&second, batch, 4, &a.state).unwrap();
    let v = 11;
    for bi in 0..batch {
        for t in 0..8 {
            let w = &whole.logits[(bi * 8 + t) * v..][..v];
            let part = if t < 4 { &a.logits[(bi * 4 + t) * v..][..v] } else { &b.logits[(bi * 4 + t - 4) * v..][..v] };
            for (x, y) in w.iter().zip(part) {
                assert!((x - y).abs() < 1e-5);
            }
        }
    }
    assert_eq!(whole.state, b.state);
}

/// Straight-line cell written from the gate equations, dense weights only.
fn oracle_cell(w_i: &Matrix<f64>, w_h: &Matrix<f64>, bias: &[f64], x: &[f64], h_prev: &[f64], c_prev: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = h_prev.len();
    let sig = |z: f64| 1.0 / (1.0 + (-z).exp());
    let pre = |row: usize| {
        let mut a = bias[row];
        for k in 0..x.len() {
            a += w_i.get(row, k) * x[k];
        }
        for k in 0..n {
            a += w_h.get(row, k) * h_prev[k];
        }
        a
    };
    let mut h = vec![0.0; n];
    let mut c = vec![0.0; n];
    for j in 0..n {
        let i_t = sig(pre(j));
        let f_t = sig(pre(n + j));
        let o_t = sig(pre(2 * n + j));
        let cand = pre(3 * n + j).tanh();
        c[j] = f_t * c_prev[j] + i_t * cand;
        h[j] = o_t * c[j].tanh();
    }
    (h, c)
}

#[test]
fn cell_matches_transcription_oracle() {
    for seed in 0..10u64 {
        let (n, inp) = (3, 5);
        let w_i = prng_matrix::<f64>(4 * n, inp, seed, 0.8).unwrap();
        let w_h = prng_matrix::<f64>(4 * n, n, seed + 100, 0.8).unwrap();
        let bias = prng_matrix::<f64>(1, 4 * n, seed + 200, 0.5).unwrap().into_vec();
        let x = prng_matrix::<f64>(1, inp, seed + 300, 1.0).unwrap().into_vec();
        let h0 = prng_matrix::<f64>(1, n, seed + 400, 0.9).unwrap().into_vec();
        let c0 = prng_matrix::<f64>(1, n, seed + 500, 2.0).unwrap().into_vec();
        let want = oracle_cell(&w_i, &w_h, &bias, &x, &h0, &c0);
        let gw = GateWeights::new(WeightSlot::Dense(w_i.clone()), WeightSlot::Dense(w_h.clone()), bias.clone()).unwrap();
        let got = gw.cell_forward(&x, &h0, &c0).unwrap();
        for (a, b) in got.0.iter().chain(&got.1).zip(want.0.iter().chain(&want.1)) {
            assert!((a - b).abs() < 1e-5, "seed {seed}");
        }
        for h in &got.0 {
            assert!(h.abs() < 1.0);
        }
    }
}

fn full_rank_factorized(w: &Matrix<f32>, per_gate: bool) -> WeightSlot<f32> {
    let (m, n) = w.shape();
    let blocks = if per_gate { 4 } else { 1 };
    let bm = m / blocks;
    let parts = (0..blocks)
        .map(|b| {
            let wb = w.row_block(b * bm, bm);
            if n <= bm {
                FactorizedMatrix::new(wb, Matrix::identity(n)).unwrap()
            } else {
                FactorizedMatrix::new(Matrix::identity(bm), wb).unwrap()
            }
        })
        .collect();
    WeightSlot::factorized(parts).unwrap()
}

#[test]
fn full_rank_factorized_matches_dense() {
    for (seed, per_gate) in [(1u64, true), (2, false), (3, true)] {
        let dense = model::<f32>(config(13, 6, 5, 2, false), seed);
        let mut fact = dense.clone();
        for l in 0..2 {
            for which in [Recurrence::Wi, Recurrence::Wh] {
                let w = dense.slot(l, which).effective();
                fact.replace_slot(l, which, full_rank_factorized(&w, per_gate)).unwrap();
            }
        }
        let input = ids(3 * 7, 13, seed + 7);
        let st = LstmState::zeros(dense.config(), 3);
        let a = dense.lm_forward(&input, 3, 7, &st).unwrap();
        let b = fact.lm_forward(&input, 3, 7, &st).unwrap();
        for (x, y) in a.logits.iter().zip(&b.logits) {
            assert!((x - y).abs() <= 1e-4 * x.abs().max(1.0), "{x} vs {y}");
        }
    }
}

#[test]
fn factorized_apply_counts_rank_flops() {
    let (m, n, r) = (48usize, 40usize, 6usize);
    let u = prng_matrix::<f32>(m, r, 1, 1.0).unwrap();
    let v = prng_matrix::<f32>(r, n, 2, 1.0).unwrap();
    let slot = WeightSlot::factorized(vec![FactorizedMatrix::new(u, v).unwrap()]).unwrap();
    let dense = WeightSlot::Dense(slot.effective());
    let x = vec![0.5f32; n];
    let mut y = vec![0.0f32; m];
    flops::reset();
    dense.apply_vec(&x, &mut y);
    let dense_ops = flops::read();
    flops::reset();
    slot.apply_vec(&x, &mut y);
    let fact_ops = flops::read();
    assert_eq!(dense_ops, (m * n) as u64);
    assert_eq!(fact_ops, (r * (m + n)) as u64);
    assert_eq!(slot.flops_per_vector() as u64, fact_ops);
}

fn assert_grads_match(mut m: LstmLm<f64>, win: &Window, dropout: f64) {
    let st0 = {
        let mut st = LstmState::zeros(m.config(), win.batch_size);
        for (l, h) in st.h.iter_mut().enumerate() {
            h.iter_mut().enumerate().for_each(|(k, x)| *x = 0.1 * ((k + l) as f64).sin());
        }
        for c in st.c.iter_mut() {
            c.iter_mut().enumerate().for_each(|(k, x)| *x = 0.2 * (k as f64).cos());
        }
        st
    };
    let loss = |m: &LstmLm<f64>| {
        let mut rng = prng(77);
        let d = (dropout > 0.0).then_some((&mut rng, dropout));
        m.loss_and_grad(win, &st0, d).unwrap()
    };
    let (_, grads, _) = loss(&m);
    let names: Vec<String> = m.params().iter().map(|p| p.name.clone()).collect();
    let masks: Vec<Option<Vec<bool>>> = m.params().iter().map(|p| p.mask.map(<[bool]>::to_vec)).collect();
    let eps = 1e-3;
    let mut checked = 0;
    for (pi, g) in grads.buffers().iter().enumerate() {
        for k in 0..g.len() {
            if masks[pi].as_ref().is_some_and(|mask| !mask[k]) {
                assert_eq!(g[k], 0.0, "masked gradient {}[{k}]", names[pi]);
                continue;
            }
            let orig = m.params_mut()[pi][k];
            m.params_mut()[pi][k] = orig + eps;
            let up = loss(&m).0;
            m.params_mut()[pi][k] = orig - eps;
            let down = loss(&m).0;
            m.params_mut()[pi][k] = orig;
            let num = (up - down) / (2.0 * eps);
            let err = (num - g[k]).abs();
            assert!(
                err <= 1e-3 * num.abs().max(g[k].abs()) + 1e-7,
                "{}[{k}]: analytic {} numeric {num}",
                names[pi],
                g[k]
            );
            checked += 1;
        }
    }
    assert!(checked > 0);
}

#[test]
fn gradients_match_finite_differences_dense() {
    let m = model::<f64>(config(5, 4, 4, 1, false), 11);
    assert_grads_match(m, &window(2, 3, 5, 1), 0.0);
}

#[test]
fn gradients_match_finite_differences_two_layers_tied_dropout() {
    let m = model::<f64>(config(5, 4, 4, 2, true), 12);
    assert_grads_match(m, &window(2, 3, 5, 2), 0.3);
}

#[test]
fn gradients_match_finite_differences_factorized_and_pruned() {
    let mut m = model::<f64>(config(5, 4, 4, 2, false), 13);
    let wh = m.slot(0, Recurrence::Wh).effective();
    let blocks = (0..4)
        .map(|b| truncated_svd(&wh.row_block(4 * b, 4), 2).unwrap())
        .collect();
    m.replace_slot(0, Recurrence::Wh, WeightSlot::factorized(blocks).unwrap()).unwrap();
    let wi = m.slot(1, Recurrence::Wi).effective();
    m.replace_slot(1, Recurrence::Wi, WeightSlot::factorized(vec![truncated_svd(&wi, 3).unwrap()]).unwrap())
        .unwrap();
    let w = m.slot(1, Recurrence::Wh).effective();
    m.replace_slot(1, Recurrence::Wh, WeightSlot::Pruned(prune_magnitude(&w, 30).unwrap())).unwrap();
    assert_grads_match(m, &window(2, 3, 5, 3), 0.0);
}

#[test]
fn zero_learning_rate_leaves_model_bit_identical() {
    let mut m = model::<f32>(config(6, 4, 5, 2, false), 21);
    let before = m.clone();
    let opts = TrainOptions {
        lr: 0.0,
        ..TrainOptions::default()
    };
    let mut rng = prng(0);
    let st = LstmState::zeros(m.config(), 2);
    m.bptt_step(&window(2, 5, 6, 4), &st, &opts, &mut rng).unwrap();
    assert_eq!(m, before);
}

#[test]
fn pruned_mask_stays_zero_through_training() {
    let mut m = model::<f32>(config(8, 6, 6, 1, false), 22);
    let w = m.slot(0, Recurrence::Wh).effective();
    m.replace_slot(0, Recurrence::Wh, WeightSlot::Pruned(prune_magnitude(&w, 50).unwrap())).unwrap();
    let mask = m.slot(0, Recurrence::Wh).mask().unwrap().to_vec();
    let opts = TrainOptions {
        lr: 0.5,
        ..TrainOptions::default()
    };
    let mut rng = prng(5);
    let mut st = LstmState::zeros(m.config(), 2);
    for step in 0..100 {
        st = m.bptt_step(&window(2, 4, 8, step), &st, &opts, &mut rng).unwrap().state;
    }
    let WeightSlot::Pruned(p) = m.slot(0, Recurrence::Wh) else { panic!("slot kind changed") };
    assert_eq!(p.mask(), &mask[..]);
    for (x, keep) in p.weights().as_slice().iter().zip(&mask) {
        if !keep {
            assert_eq!(*x, 0.0);
        }
    }
}

#[test]
fn training_drops_loss_below_uniform() {
    let text: String = "the quick brown fox jumps over the lazy dog. ".repeat(23)[..1000].to_string();
    let vocab = Vocabulary::build(&text, TokenMode::Char, 1).unwrap();
    let v = vocab.len();
    let stream = vocab.encode(&text);
    let corpus = batchify(&stream, 4, 10).unwrap();
    let cfg = config(v, 16, 32, 1, false);
    let mut m = LstmLm::<f32>::new_random(cfg, vocab, 3).unwrap();
    let opts = TrainOptions {
        lr: 1.0,
        clip: 0.25,
        dropout: 0.0,
        batch_size: 4,
        bptt_len: 10,
    };
    let mut rng = prng(1);
    let mut steps = 0;
    let mut last = f64::INFINITY;
    while steps < 200 {
        let mut st = LstmState::zeros(m.config(), 4);
        let (mut tot, mut n) = (0.0, 0);
        for w in corpus.windows() {
            let s = m.bptt_step(&w, &st, &opts, &mut rng).unwrap();
            tot += s.loss;
            n += 1;
            st = s.state;
            steps += 1;
            if steps == 200 {
                break;
            }
        }
        last = tot / n as f64;
    }
    assert!(last < (v as f64).ln(), "loss {last} vs ln V {}", (v as f64).ln());
}

#[test]
fn train_epoch_reports_divergence_position() {
    let mut m = model::<f32>(config(6, 4, 4, 1, false), 30);
    m.params_mut().last_mut().unwrap()[0] = f32::NAN;
    let stream = ids(200, 6, 1);
    let corpus = batchify(&stream, 2, 5).unwrap();
    let opts = TrainOptions {
        batch_size: 2,
        bptt_len: 5,
        ..TrainOptions::default()
    };
    let err = m.train_epoch(&corpus, &opts, &mut prng(0), 3);
    assert!(matches!(err, Err(crate::Error::Diverged { epoch: 3, .. })), "{err:?}");
}

#[test]
fn param_counts_and_names() {
    let m = model::<f32>(config(10, 3, 4, 2, false), 0);
    let c = m.param_counts();
    assert_eq!(c.embedding, 30);
    assert_eq!(c.lstm, (16 * 3 + 16 * 4 + 16) + (16 * 4 + 16 * 4 + 16));
    assert_eq!(c.decoder, 40 + 10);
    assert_eq!(c.total, c.embedding + c.lstm + c.decoder);
    let names: Vec<_> = m.params().iter().map(|p| p.name.clone()).collect();
    assert_eq!(
        names,
        [
            "embedding",
            "layers.0.w_i",
            "layers.0.w_h",
            "layers.0.bias",
            "layers.1.w_i",
            "layers.1.w_h",
            "layers.1.bias",
            "decoder.weight",
            "decoder.bias"
        ]
    );
    let bias = m.layers()[0].bias();
    assert!(bias[4..8].iter().all(|&b| b == 1.0));
    assert!(bias[..4].iter().chain(&bias[8..]).all(|&b| b == 0.0));
}
