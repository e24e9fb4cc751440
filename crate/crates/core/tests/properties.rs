use lrlstm_core::corpus::{batchify, tokenize, TokenMode, Vocabulary};
use lrlstm_core::factor::{prune_magnitude, rank_to_keep_count, semi_nmf, truncated_svd, SemiNmfOptions};
use lrlstm_core::lstm::{GateWeights, LstmLm, LstmState, ModelConfig, Recurrence, WeightSlot};
use lrlstm_core::pipeline::{compress_model, decode_checkpoint, encode_checkpoint, CompressionSpec, Method, Scope, Target};
use lrlstm_core::tensor::{norm_stats, prng_matrix, singular_values, spectral_norm, svd_full, Matrix};
use proptest::prelude::*;

fn matrix() -> impl Strategy<Value = Matrix<f64>> {
    (1usize..=12, 1usize..=12, any::<u64>()).prop_map(|(m, n, seed)| prng_matrix(m, n, seed, 1.0).unwrap())
}

fn matrix_with_rank() -> impl Strategy<Value = (Matrix<f64>, usize)> {
    matrix().prop_flat_map(|w| {
        let k = w.rows().min(w.cols());
        (Just(w), 1..=k)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn svd_reconstructs_with_orthonormal_factors(w in matrix()) {
        let svd = svd_full(&w).unwrap();
        prop_assert!(svd.reconstruct(svd.s.len()).frobenius_distance(&w) <= 1e-9 * w.frobenius().max(1.0));
        prop_assert!(svd.s.windows(2).all(|p| p[0] >= p[1]));
        prop_assert!(svd.s.iter().all(|&s| s >= 0.0));
        let k = svd.s.len();
        let utu = svd.u.transpose().matmul(&svd.u).unwrap();
        let vvt = svd.vt.matmul(&svd.vt.transpose()).unwrap();
        prop_assert!(utu.frobenius_distance(&Matrix::identity(k)) < 1e-9);
        prop_assert!(vvt.frobenius_distance(&Matrix::identity(k)) < 1e-9);
    }

    #[test]
    fn truncation_error_is_singular_value_tail((w, r) in matrix_with_rank()) {
        let s = singular_values(&w).unwrap();
        let tail = s[r..].iter().map(|x| x * x).sum::<f64>().sqrt();
        let err = truncated_svd(&w, r).unwrap().reconstruct().frobenius_distance(&w);
        prop_assert!((err - tail).abs() <= 1e-9 * (1.0 + tail), "{} vs {}", err, tail);
    }

    #[test]
    fn truncated_nuclear_is_partial_sum_and_monotone((w, r) in matrix_with_rank()) {
        let s = singular_values(&w).unwrap();
        let nuc = |k| norm_stats(&truncated_svd(&w, k).unwrap().reconstruct()).unwrap().nuclear;
        let top: f64 = s[..r].iter().sum();
        prop_assert!((nuc(r) - top).abs() <= 1e-9 * (1.0 + top));
        if r > 1 {
            prop_assert!(nuc(r - 1) <= nuc(r) + 1e-12);
        }
    }

    #[test]
    fn norm_ordering(w in matrix()) {
        let st = norm_stats(&w).unwrap();
        let fro = w.frobenius();
        let spec = spectral_norm(&w).unwrap();
        let k = w.rows().min(w.cols()) as f64;
        prop_assert!(spec <= fro * (1.0 + 1e-12));
        prop_assert!(fro <= st.nuclear * (1.0 + 1e-12));
        prop_assert!(st.nuclear <= k.sqrt() * fro * (1.0 + 1e-12));
        prop_assert!(fro <= st.l1 * (1.0 + 1e-12));
        prop_assert!(st.l1_std >= 0.0);
    }

    #[test]
    fn pruning_respects_budget_and_magnitudes((w, r) in matrix_with_rank()) {
        let keep = rank_to_keep_count(w.rows(), w.cols(), r);
        prop_assert_eq!(keep, (r * (w.rows() + w.cols())).min(w.len()));
        let p = prune_magnitude(&w, keep).unwrap();
        prop_assert_eq!(p.kept(), keep);
        prop_assert_eq!(p.mask().iter().filter(|&&k| k).count(), keep);
        let vals = w.as_slice();
        let min_kept = vals.iter().zip(p.mask()).filter(|(_, &k)| k).map(|(v, _)| v.abs()).fold(f64::INFINITY, f64::min);
        let max_dropped = vals.iter().zip(p.mask()).filter(|(_, &k)| !k).map(|(v, _)| v.abs()).fold(0.0, f64::max);
        prop_assert!(keep == 0 || keep == w.len() || min_kept >= max_dropped);
        // Pruning never increases L1, and the nuclear norm obeys the triangle
        // inequality through the zeroed remainder.
        let base = norm_stats(&w).unwrap();
        let pruned = norm_stats(p.weights()).unwrap();
        let dropped = Matrix::from_fn(w.rows(), w.cols(), |i, j| if p.mask()[i * w.cols() + j] { 0.0 } else { w.get(i, j) });
        prop_assert!(pruned.l1 <= base.l1 + 1e-12);
        prop_assert!(pruned.nuclear <= base.nuclear + norm_stats(&dropped).unwrap().nuclear + 1e-9);
    }

    #[test]
    fn semi_nmf_is_feasible_and_descends((w, r) in matrix_with_rank()) {
        let out = semi_nmf(&w, r, &SemiNmfOptions::default()).unwrap();
        prop_assert!(out.factors.v().as_slice().iter().all(|&x| x >= 0.0));
        prop_assert!(out.objective_trace.windows(2).all(|p| p[1] <= p[0] + 1e-6));
        let svd_err = truncated_svd(&w, r).unwrap().reconstruct().frobenius_distance(&w);
        prop_assert!(out.factors.reconstruct().frobenius_distance(&w) >= svd_err - 1e-5);
    }

    #[test]
    fn gates_stay_in_range(seed in any::<u64>(), scale in 0.1f64..20.0) {
        let (n, inp) = (5, 3);
        let gw = GateWeights::new(
            WeightSlot::Dense(prng_matrix::<f64>(4 * n, inp, seed, scale).unwrap()),
            WeightSlot::Dense(prng_matrix::<f64>(4 * n, n, seed ^ 1, scale).unwrap()),
            prng_matrix::<f64>(1, 4 * n, seed ^ 2, scale).unwrap().into_vec(),
        ).unwrap();
        let x = prng_matrix::<f64>(1, inp, seed ^ 3, scale).unwrap().into_vec();
        let h0 = prng_matrix::<f64>(1, n, seed ^ 4, 0.99).unwrap().into_vec();
        let c0 = prng_matrix::<f64>(1, n, seed ^ 5, scale).unwrap().into_vec();
        let (h, c) = gw.cell_forward(&x, &h0, &c0).unwrap();
        prop_assert!(h.iter().all(|v| v.abs() <= 1.0));
        // |c| <= |c_prev| + 1 since f, i lie in (0, 1) and |tanh| < 1.
        prop_assert!(c.iter().zip(&c0).all(|(c, p)| c.abs() <= p.abs() + 1.0));
    }

    #[test]
    fn checkpoint_encoding_round_trips(seed in any::<u64>(), h in 2usize..6, layers in 1usize..3, method in 0usize..3) {
        let text = "round trip text\n";
        let vocab = Vocabulary::build(text, TokenMode::Char, 1).unwrap();
        let cfg = ModelConfig { vocab_size: vocab.len(), emb_dim: 3, hidden_dim: h, num_layers: layers, tied: false };
        let m = LstmLm::<f32>::new_random(cfg, vocab, seed).unwrap();
        let method = [Method::Svd, Method::SemiNmf, Method::Prune][method];
        let (m, _) = compress_model(&m, &CompressionSpec::new(method, Target::Wh, Scope::PerGate, 1)).unwrap();
        let (manifest, blob) = encode_checkpoint(&m);
        let back = decode_checkpoint(&manifest, &blob).unwrap();
        prop_assert_eq!(&back, &m);
        prop_assert_eq!(encode_checkpoint(&back), (manifest.clone(), blob.clone()));
        prop_assert!(decode_checkpoint(&manifest, &blob[..blob.len() - 1]).is_err());
    }

    #[test]
    fn batches_serve_every_target_once(len in 4usize..200, batch in 1usize..4, bptt in 1usize..9) {
        prop_assume!(len >= 2 * batch);
        let ids: Vec<u32> = (0..len as u32).collect();
        let c = batchify(&ids, batch, bptt).unwrap();
        let mut targets: Vec<u32> = c.windows().flat_map(|w| w.target).collect();
        prop_assert_eq!(targets.len(), c.num_targets());
        targets.sort_unstable();
        targets.dedup();
        prop_assert_eq!(targets.len(), c.num_targets());
        for w in c.windows() {
            prop_assert!(w.input.iter().zip(&w.target).all(|(i, t)| t == &(i + 1)));
        }
    }

    #[test]
    fn word_vocab_round_trips(words in proptest::collection::vec("[a-d]{1,3}", 1..20)) {
        let text = words.join(" ");
        let vocab = Vocabulary::build(&text, TokenMode::Word, 1).unwrap();
        let ids = vocab.encode(&text);
        prop_assert_eq!(ids.len(), tokenize(&text, TokenMode::Word).len());
        prop_assert!(ids.iter().all(|&i| i != Vocabulary::UNK_ID));
    }
}

#[test]
fn state_threads_across_windows() {
    let text = "threading state across windows\n".repeat(3);
    let vocab = Vocabulary::build(&text, TokenMode::Char, 1).unwrap();
    let cfg = ModelConfig {
        vocab_size: vocab.len(),
        emb_dim: 6,
        hidden_dim: 7,
        num_layers: 2,
        tied: false,
    };
    let ids = vocab.encode(&text);
    let m = LstmLm::<f32>::new_random(cfg, vocab, 4).unwrap();
    let (m, _) = compress_model(&m, &CompressionSpec::new(Method::Svd, Target::Both, Scope::Stacked, 3)).unwrap();
    assert_eq!(m.slot(1, Recurrence::Wi).param_count(), 3 * (28 + 7));
    let whole = m.lm_forward(&ids[..40], 1, 40, &LstmState::zeros(m.config(), 1)).unwrap();
    let mut st = LstmState::zeros(m.config(), 1);
    let mut pieces = Vec::new();
    for chunk in ids[..40].chunks(7) {
        let f = m.lm_forward(chunk, 1, chunk.len(), &st).unwrap();
        pieces.extend(f.logits);
        st = f.state;
    }
    for (a, b) in whole.logits.iter().zip(&pieces) {
        assert!((a - b).abs() < 1e-5);
    }
}
