use serde::{Deserialize, Serialize};

use super::cell::{activate_gates, cell_update, GateWeights};
use super::slot::WeightSlot;
use crate::corpus::{TokenId, Vocabulary};
use crate::tensor::{gemm, prng, prng_matrix, unit_f64, Matrix, Prng, Real, Trans};
use crate::{Error, Result};
use rand_core::RngCore;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub emb_dim: usize,
    pub hidden_dim: usize,
    pub num_layers: usize,
    /// Decoder reuses the embedding matrix (requires `emb_dim == hidden_dim`).
    pub tied: bool,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.vocab_size < 2 || self.emb_dim == 0 || self.hidden_dim == 0 || self.num_layers == 0 {
            return Err(Error::InvalidShape(format!("degenerate model config {self:?}")));
        }
        if self.tied && self.emb_dim != self.hidden_dim {
            return Err(Error::InvalidShape("tied embeddings need emb_dim == hidden_dim".into()));
        }
        Ok(())
    }

    pub fn layer_input_dim(&self, layer: usize) -> usize {
        if layer == 0 {
            self.emb_dim
        } else {
            self.hidden_dim
        }
    }
}

/// Which recurrence matrix of a layer.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Recurrence {
    /// Input-to-hidden (additive recurrence).
    #[serde(rename = "w_i")]
    Wi,
    /// Hidden-to-hidden (multiplicative recurrence).
    #[serde(rename = "w_h")]
    Wh,
}

impl Recurrence {
    pub fn as_str(self) -> &'static str {
        match self {
            Recurrence::Wi => "w_i",
            Recurrence::Wh => "w_h",
        }
    }
}

/// Per-layer `(h, c)`, each `batch x H` row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct LstmState<T = f32> {
    pub batch: usize,
    pub h: Vec<Vec<T>>,
    pub c: Vec<Vec<T>>,
}

impl<T: Real> LstmState<T> {
    pub fn zeros(config: &ModelConfig, batch: usize) -> Self {
        let n = batch * config.hidden_dim;
        Self {
            batch,
            h: vec![vec![T::zero(); n]; config.num_layers],
            c: vec![vec![T::zero(); n]; config.num_layers],
        }
    }
}

/// A named view of one trainable tensor.
pub struct ParamView<'a, T> {
    pub name: String,
    pub shape: (usize, usize),
    pub data: &'a [T],
    pub mask: Option<&'a [bool]>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamCounts {
    pub embedding: usize,
    pub lstm: usize,
    pub decoder: usize,
    pub total: usize,
}

/// Embedding, stacked LSTM layers and a linear decoder to vocabulary logits.
#[derive(Clone, Debug, PartialEq)]
pub struct LstmLm<T = f32> {
    pub(crate) config: ModelConfig,
    pub(crate) vocab: Vocabulary,
    pub(crate) embedding: Matrix<T>,
    pub(crate) layers: Vec<GateWeights<T>>,
    /// `H x V`; `None` when tied to the embedding.
    pub(crate) decoder: Option<Matrix<T>>,
    pub(crate) decoder_bias: Vec<T>,
}

pub(crate) struct LayerCache<T> {
    pub input: Vec<T>,
    pub acts: Vec<T>,
    pub c: Vec<T>,
    pub h: Vec<T>,
    pub h0: Vec<T>,
    pub c0: Vec<T>,
    pub dropout: Option<Vec<T>>,
}

/// Activations retained for the backward pass. Layer buffers are
/// time-major (`row = t * batch + b`).
pub struct ForwardCache<T> {
    pub(crate) batch: usize,
    pub(crate) steps: usize,
    pub(crate) input: Vec<TokenId>,
    pub(crate) layers: Vec<LayerCache<T>>,
    /// Decoder input, batch-major (`row = b * steps + t`).
    pub(crate) top: Vec<T>,
}

pub struct Forward<T> {
    /// `(batch * steps) x V` row-major, row `b * steps + t`. Not checked for
    /// finiteness.
    pub logits: Vec<T>,
    pub state: LstmState<T>,
    pub cache: ForwardCache<T>,
}

impl<T: Real> LstmLm<T> {
    /// Uniform `±1/√H` initialization from `seed`; forget-gate bias 1, other
    /// biases 0.
    pub fn new_random(config: ModelConfig, vocab: Vocabulary, seed: u64) -> Result<Self> {
        config.validate()?;
        if vocab.len() != config.vocab_size {
            return Err(Error::Vocab(format!(
                "config has vocab_size {} but vocabulary has {} tokens",
                config.vocab_size,
                vocab.len()
            )));
        }
        let scale = 1.0 / (config.hidden_dim as f64).sqrt();
        let mut seeds = prng(seed);
        let mut draw = |rows, cols| prng_matrix::<T>(rows, cols, seeds.next_u64(), scale);
        let (v, e, h) = (config.vocab_size, config.emb_dim, config.hidden_dim);
        let embedding = draw(v, e)?;
        let mut layers = Vec::with_capacity(config.num_layers);
        for l in 0..config.num_layers {
            let w_i = draw(4 * h, config.layer_input_dim(l))?;
            let w_h = draw(4 * h, h)?;
            let mut bias = vec![T::zero(); 4 * h];
            bias[h..2 * h].iter_mut().for_each(|b| *b = T::one());
            layers.push(GateWeights::new(WeightSlot::Dense(w_i), WeightSlot::Dense(w_h), bias)?);
        }
        let decoder = if config.tied { None } else { Some(draw(h, v)?) };
        Self::from_parts(config, vocab, embedding, layers, decoder, vec![T::zero(); v])
    }

    pub fn from_parts(
        config: ModelConfig,
        vocab: Vocabulary,
        embedding: Matrix<T>,
        layers: Vec<GateWeights<T>>,
        decoder: Option<Matrix<T>>,
        decoder_bias: Vec<T>,
    ) -> Result<Self> {
        config.validate()?;
        let (v, e, h) = (config.vocab_size, config.emb_dim, config.hidden_dim);
        if vocab.len() != v {
            return Err(Error::Vocab(format!("vocabulary has {} tokens, config says {v}", vocab.len())));
        }
        if embedding.shape() != (v, e) || layers.len() != config.num_layers || decoder_bias.len() != v {
            return Err(Error::Shape("model parts do not match config".into()));
        }
        for (l, layer) in layers.iter().enumerate() {
            if layer.hidden_dim() != h || layer.input_dim() != config.layer_input_dim(l) {
                return Err(Error::Shape(format!("layer {l} dims do not chain")));
            }
        }
        match (&decoder, config.tied) {
            (None, true) => {}
            (Some(d), false) if d.shape() == (h, v) => {}
            _ => return Err(Error::Shape("decoder does not match config".into())),
        }
        Ok(Self {
            config,
            vocab,
            embedding,
            layers,
            decoder,
            decoder_bias,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn embedding(&self) -> &Matrix<T> {
        &self.embedding
    }

    pub fn layers(&self) -> &[GateWeights<T>] {
        &self.layers
    }

    pub fn decoder(&self) -> Option<&Matrix<T>> {
        self.decoder.as_ref()
    }

    pub fn decoder_bias(&self) -> &[T] {
        &self.decoder_bias
    }

    pub fn slot(&self, layer: usize, which: Recurrence) -> &WeightSlot<T> {
        match which {
            Recurrence::Wi => &self.layers[layer].w_i,
            Recurrence::Wh => &self.layers[layer].w_h,
        }
    }

    /// Swaps in a slot of identical effective shape, returning the old one.
    pub fn replace_slot(&mut self, layer: usize, which: Recurrence, slot: WeightSlot<T>) -> Result<WeightSlot<T>> {
        let gw = self
            .layers
            .get_mut(layer)
            .ok_or_else(|| Error::Shape(format!("no layer {layer}")))?;
        let target = match which {
            Recurrence::Wi => &mut gw.w_i,
            Recurrence::Wh => &mut gw.w_h,
        };
        if target.shape() != slot.shape() {
            return Err(Error::Shape(format!(
                "replacement {:?} does not match slot shape {:?}",
                slot.shape(),
                target.shape()
            )));
        }
        Ok(std::mem::replace(target, slot))
    }

    pub fn param_counts(&self) -> ParamCounts {
        let embedding = self.embedding.len();
        let lstm = self
            .layers
            .iter()
            .map(|l| l.w_i.param_count() + l.w_h.param_count() + l.bias.len())
            .sum();
        let decoder = self.decoder.as_ref().map_or(0, Matrix::len) + self.decoder_bias.len();
        ParamCounts {
            embedding,
            lstm,
            decoder,
            total: embedding + lstm + decoder,
        }
    }

    /// Trainable tensors in canonical order: embedding, then per layer the
    /// `w_i` tensors, `w_h` tensors and bias, then decoder weight (untied
    /// only) and decoder bias.
    pub fn params(&self) -> Vec<ParamView<'_, T>> {
        let mut out = vec![ParamView {
            name: "embedding".into(),
            shape: self.embedding.shape(),
            data: self.embedding.as_slice(),
            mask: None,
        }];
        for (l, layer) in self.layers.iter().enumerate() {
            for (which, slot) in [(Recurrence::Wi, &layer.w_i), (Recurrence::Wh, &layer.w_h)] {
                let base = format!("layers.{l}.{}", which.as_str());
                let tensors = slot.tensors();
                let factored = matches!(slot, WeightSlot::Factorized(_));
                for (k, t) in tensors.into_iter().enumerate() {
                    let name = if factored {
                        format!("{base}.{}{}", if k % 2 == 0 { "u" } else { "v" }, k / 2)
                    } else {
                        base.clone()
                    };
                    out.push(ParamView {
                        name,
                        shape: t.shape(),
                        data: t.as_slice(),
                        mask: slot.mask(),
                    });
                }
            }
            out.push(ParamView {
                name: format!("layers.{l}.bias"),
                shape: (1, layer.bias.len()),
                data: &layer.bias,
                mask: None,
            });
        }
        if let Some(d) = &self.decoder {
            out.push(ParamView {
                name: "decoder.weight".into(),
                shape: d.shape(),
                data: d.as_slice(),
                mask: None,
            });
        }
        out.push(ParamView {
            name: "decoder.bias".into(),
            shape: (1, self.decoder_bias.len()),
            data: &self.decoder_bias,
            mask: None,
        });
        out
    }

    /// Mutable slices in [`LstmLm::params`] order. Masked entries of pruned
    /// slots must stay zero.
    pub fn params_mut(&mut self) -> Vec<&mut [T]> {
        let mut out: Vec<&mut [T]> = vec![self.embedding.as_mut_slice()];
        for layer in &mut self.layers {
            out.extend(layer.w_i.tensors_mut().into_iter().map(Matrix::as_mut_slice));
            out.extend(layer.w_h.tensors_mut().into_iter().map(Matrix::as_mut_slice));
            out.push(&mut layer.bias);
        }
        if let Some(d) = &mut self.decoder {
            out.push(d.as_mut_slice());
        }
        out.push(&mut self.decoder_bias);
        out
    }

    pub(crate) fn layout(&self) -> ParamLayout {
        let mut idx = 1;
        let mut layers = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let ni = layer.w_i.tensors().len();
            let nh = layer.w_h.tensors().len();
            layers.push(LayerLayout {
                w_i: idx,
                w_h: idx + ni,
                bias: idx + ni + nh,
            });
            idx += ni + nh + 1;
        }
        let decoder = self.decoder.as_ref().map(|_| {
            idx += 1;
            idx - 1
        });
        ParamLayout {
            embedding: 0,
            layers,
            decoder,
            decoder_bias: idx,
        }
    }

    pub fn cast<U: Real>(&self) -> LstmLm<U> {
        LstmLm {
            config: self.config.clone(),
            vocab: self.vocab.clone(),
            embedding: self.embedding.cast(),
            layers: self.layers.iter().map(GateWeights::cast).collect(),
            decoder: self.decoder.as_ref().map(Matrix::cast),
            decoder_bias: self.decoder_bias.iter().map(|b| U::from_f64(b.as_f64())).collect(),
        }
    }

    /// Runs `input` (`batch x steps`, row-major) from `state`. With `dropout`
    /// set, each layer output is masked with inverted-dropout probability `p`.
    pub fn forward(
        &self,
        input: &[TokenId],
        batch: usize,
        steps: usize,
        state: &LstmState<T>,
        mut dropout: Option<(&mut Prng, f64)>,
    ) -> Result<Forward<T>> {
        let cfg = &self.config;
        let (h, v) = (cfg.hidden_dim, cfg.vocab_size);
        if batch == 0 || steps == 0 || input.len() != batch * steps {
            return Err(Error::Shape(format!("input of {} ids is not {batch}x{steps}", input.len())));
        }
        if state.batch != batch || state.h.len() != cfg.num_layers {
            return Err(Error::Shape("state does not match batch or layer count".into()));
        }
        if let Some(&bad) = input.iter().find(|&&id| id as usize >= v) {
            return Err(Error::Vocab(format!("token id {bad} outside vocabulary of {v}")));
        }
        let rows = batch * steps;
        let e = cfg.emb_dim;
        let mut x = vec![T::zero(); rows * e];
        for t in 0..steps {
            for b in 0..batch {
                let id = input[b * steps + t] as usize;
                x[(t * batch + b) * e..(t * batch + b + 1) * e].copy_from_slice(self.embedding.row(id));
            }
        }

        let mut scratch = Vec::new();
        let mut new_state = LstmState {
            batch,
            h: Vec::with_capacity(cfg.num_layers),
            c: Vec::with_capacity(cfg.num_layers),
        };
        let mut caches = Vec::with_capacity(cfg.num_layers);
        let bh = batch * h;
        for (l, layer) in self.layers.iter().enumerate() {
            let g = 4 * h;
            let mut acts = Vec::with_capacity(rows * g);
            for _ in 0..rows {
                acts.extend_from_slice(&layer.bias);
            }
            layer.w_i.forward_acc(&x, rows, &mut acts, g, &mut scratch);
            let mut hs = vec![T::zero(); rows * h];
            let mut cs = vec![T::zero(); rows * h];
            for t in 0..steps {
                let (h_done, h_rest) = hs.split_at_mut(t * bh);
                let (c_done, c_rest) = cs.split_at_mut(t * bh);
                let h_prev: &[T] = if t == 0 { &state.h[l] } else { &h_done[(t - 1) * bh..] };
                let c_prev: &[T] = if t == 0 { &state.c[l] } else { &c_done[(t - 1) * bh..] };
                let pre = &mut acts[t * batch * g..(t + 1) * batch * g];
                layer.w_h.forward_acc(h_prev, batch, pre, g, &mut scratch);
                for b in 0..batch {
                    let row = &mut pre[b * g..(b + 1) * g];
                    activate_gates(row, h);
                    cell_update(
                        row,
                        &c_prev[b * h..(b + 1) * h],
                        &mut c_rest[b * h..(b + 1) * h],
                        &mut h_rest[b * h..(b + 1) * h],
                    );
                }
            }
            new_state.h.push(hs[(steps - 1) * bh..].to_vec());
            new_state.c.push(cs[(steps - 1) * bh..].to_vec());

            let mask = match dropout.as_mut() {
                Some((rng, p)) if *p > 0.0 => {
                    let keep = T::from_f64(1.0 / (1.0 - *p));
                    Some(
                        (0..rows * h)
                            .map(|_| if unit_f64(rng) < *p { T::zero() } else { keep })
                            .collect::<Vec<T>>(),
                    )
                }
                _ => None,
            };
            let out = match &mask {
                Some(m) => hs.iter().zip(m).map(|(a, b)| *a * *b).collect(),
                None => hs.clone(),
            };
            let input_buf = std::mem::replace(&mut x, out);
            caches.push(LayerCache {
                input: input_buf,
                acts,
                c: cs,
                h: hs,
                h0: state.h[l].clone(),
                c0: state.c[l].clone(),
                dropout: mask,
            });
        }

        let mut top = vec![T::zero(); rows * h];
        for t in 0..steps {
            for b in 0..batch {
                top[(b * steps + t) * h..(b * steps + t + 1) * h]
                    .copy_from_slice(&x[(t * batch + b) * h..(t * batch + b + 1) * h]);
            }
        }
        let mut logits = Vec::with_capacity(rows * v);
        for _ in 0..rows {
            logits.extend_from_slice(&self.decoder_bias);
        }
        match &self.decoder {
            Some(d) => gemm(Trans::No, Trans::No, rows, v, h, T::one(), &top, h, d.as_slice(), v, T::one(), &mut logits, v),
            None => gemm(
                Trans::No,
                Trans::Yes,
                rows,
                v,
                h,
                T::one(),
                &top,
                h,
                self.embedding.as_slice(),
                h,
                T::one(),
                &mut logits,
                v,
            ),
        }
        Ok(Forward {
            logits,
            state: new_state,
            cache: ForwardCache {
                batch,
                steps,
                input: input.to_vec(),
                layers: caches,
                top,
            },
        })
    }

    /// Inference forward pass (no dropout).
    pub fn lm_forward(&self, input: &[TokenId], batch: usize, steps: usize, state: &LstmState<T>) -> Result<Forward<T>> {
        self.forward(input, batch, steps, state, None)
    }

    /// Adds gradients of the loss whose logit gradient is `dlogits` into
    /// `grads` (one buffer per tensor, [`LstmLm::params`] order).
    pub(crate) fn backward(&self, cache: &ForwardCache<T>, dlogits: &[T], grads: &mut [Vec<T>]) {
        let cfg = &self.config;
        let (h, v) = (cfg.hidden_dim, cfg.vocab_size);
        let (batch, steps) = (cache.batch, cache.steps);
        let rows = batch * steps;
        let layout = self.layout();
        let mut scratch = Vec::new();

        let mut dtop = vec![T::zero(); rows * h];
        match &self.decoder {
            Some(d) => {
                gemm(Trans::No, Trans::Yes, rows, h, v, T::one(), dlogits, v, d.as_slice(), v, T::zero(), &mut dtop, h);
                let gd = &mut grads[layout.decoder.expect("untied")];
                gemm(Trans::Yes, Trans::No, h, v, rows, T::one(), &cache.top, h, dlogits, v, T::one(), gd, v);
            }
            None => {
                gemm(Trans::No, Trans::No, rows, h, v, T::one(), dlogits, v, self.embedding.as_slice(), h, T::zero(), &mut dtop, h);
                let ge = &mut grads[layout.embedding];
                gemm(Trans::Yes, Trans::No, v, h, rows, T::one(), dlogits, v, &cache.top, h, T::one(), ge, h);
            }
        }
        add_column_sums(dlogits, v, &mut grads[layout.decoder_bias]);

        let mut dy = vec![T::zero(); rows * h];
        for t in 0..steps {
            for b in 0..batch {
                dy[(t * batch + b) * h..(t * batch + b + 1) * h]
                    .copy_from_slice(&dtop[(b * steps + t) * h..(b * steps + t + 1) * h]);
            }
        }

        let bh = batch * h;
        let g = 4 * h;
        for (l, layer) in self.layers.iter().enumerate().rev() {
            let lc = &cache.layers[l];
            if let Some(mask) = &lc.dropout {
                dy.iter_mut().zip(mask).for_each(|(d, m)| *d *= *m);
            }
            let mut da = vec![T::zero(); rows * g];
            let mut dh_next = vec![T::zero(); bh];
            let mut dc_next = vec![T::zero(); bh];
            for t in (0..steps).rev() {
                let c_prev: &[T] = if t == 0 { &lc.c0 } else { &lc.c[(t - 1) * bh..t * bh] };
                let acts = &lc.acts[t * batch * g..(t + 1) * batch * g];
                let cs = &lc.c[t * bh..(t + 1) * bh];
                let dys = &dy[t * bh..(t + 1) * bh];
                let das = &mut da[t * batch * g..(t + 1) * batch * g];
                for b in 0..batch {
                    let a = &acts[b * g..(b + 1) * g];
                    let d = &mut das[b * g..(b + 1) * g];
                    for j in 0..h {
                        let k = b * h + j;
                        let (i, f, o, cand) = (a[j], a[h + j], a[2 * h + j], a[3 * h + j]);
                        let tc = cs[k].tanh();
                        let dh = dys[k] + dh_next[k];
                        let dc = dc_next[k] + dh * o * (T::one() - tc * tc);
                        d[j] = dc * cand * i * (T::one() - i);
                        d[h + j] = dc * c_prev[k] * f * (T::one() - f);
                        d[2 * h + j] = dh * tc * o * (T::one() - o);
                        d[3 * h + j] = dc * i * (T::one() - cand * cand);
                        dc_next[k] = dc * f;
                    }
                }
                dh_next.iter_mut().for_each(|x| *x = T::zero());
                layer.w_h.backward_input(das, batch, &mut dh_next, &mut scratch);
            }

            let mut h_prev_all = Vec::with_capacity(rows * h);
            h_prev_all.extend_from_slice(&lc.h0);
            h_prev_all.extend_from_slice(&lc.h[..(steps - 1) * bh]);
            let lay = &layout.layers[l];
            let nh = layer.w_h.tensors().len();
            let ni = layer.w_i.tensors().len();
            layer.w_h.accumulate_grad(&h_prev_all, &da, rows, &mut grads[lay.w_h..lay.w_h + nh], &mut scratch);
            layer.w_i.accumulate_grad(&lc.input, &da, rows, &mut grads[lay.w_i..lay.w_i + ni], &mut scratch);
            add_column_sums(&da, g, &mut grads[lay.bias]);

            let in_dim = layer.input_dim();
            let mut dx = vec![T::zero(); rows * in_dim];
            layer.w_i.backward_input(&da, rows, &mut dx, &mut scratch);
            dy = dx;
        }

        let e = cfg.emb_dim;
        let ge = &mut grads[layout.embedding];
        for t in 0..steps {
            for b in 0..batch {
                let id = cache.input[b * steps + t] as usize;
                let src = &dy[(t * batch + b) * e..(t * batch + b + 1) * e];
                for (dst, s) in ge[id * e..(id + 1) * e].iter_mut().zip(src) {
                    *dst += *s;
                }
            }
        }
    }
}

pub(crate) struct LayerLayout {
    pub w_i: usize,
    pub w_h: usize,
    pub bias: usize,
}

pub(crate) struct ParamLayout {
    pub embedding: usize,
    pub layers: Vec<LayerLayout>,
    pub decoder: Option<usize>,
    pub decoder_bias: usize,
}

/// `out[j] += sum_i m[i, j]`, reduced in `f64`.
fn add_column_sums<T: Real>(m: &[T], cols: usize, out: &mut [T]) {
    let mut acc = vec![0.0f64; cols];
    for row in m.chunks_exact(cols) {
        for (a, x) in acc.iter_mut().zip(row) {
            *a += x.as_f64();
        }
    }
    for (o, a) in out.iter_mut().zip(acc) {
        *o = T::from_f64(o.as_f64() + a);
    }
}
