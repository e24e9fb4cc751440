use serde::{Deserialize, Serialize};

use super::model::{LstmLm, LstmState};
use crate::corpus::{BatchedCorpus, TokenId, Window};
use crate::tensor::{Prng, Real};
use crate::{Error, Result};

/// Mean of `-log softmax(logits)[target]` over all rows, and the row count.
/// `logits` is `targets.len() x vocab` row-major.
pub fn cross_entropy<T: Real>(logits: &[T], targets: &[TokenId], vocab: usize) -> (f64, usize) {
    assert_eq!(logits.len(), targets.len() * vocab, "logits shape");
    let mut total = 0.0;
    for (row, &t) in logits.chunks_exact(vocab).zip(targets) {
        total += log_sum_exp(row) - row[t as usize].as_f64();
    }
    (total / targets.len().max(1) as f64, targets.len())
}

fn log_sum_exp<T: Real>(row: &[T]) -> f64 {
    let max = row.iter().map(|x| x.as_f64()).fold(f64::NEG_INFINITY, f64::max);
    max + row.iter().map(|x| (x.as_f64() - max).exp()).sum::<f64>().ln()
}

/// Mean cross-entropy and its gradient with respect to the logits.
pub(crate) fn cross_entropy_grad<T: Real>(logits: &[T], targets: &[TokenId], vocab: usize) -> (f64, Vec<T>) {
    let n = targets.len() as f64;
    let mut total = 0.0;
    let mut grad = Vec::with_capacity(logits.len());
    for (row, &t) in logits.chunks_exact(vocab).zip(targets) {
        let lse = log_sum_exp(row);
        total += lse - row[t as usize].as_f64();
        for (j, x) in row.iter().enumerate() {
            let p = (x.as_f64() - lse).exp();
            let onehot = if j == t as usize { 1.0 } else { 0.0 };
            grad.push(T::from_f64((p - onehot) / n));
        }
    }
    (total / n, grad)
}

/// One gradient buffer per trainable tensor, in [`LstmLm::params`] order.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients<T = f32> {
    bufs: Vec<Vec<T>>,
}

impl<T: Real> Gradients<T> {
    pub fn zeros_like(model: &LstmLm<T>) -> Self {
        Self {
            bufs: model.params().iter().map(|p| vec![T::zero(); p.data.len()]).collect(),
        }
    }

    pub fn buffers(&self) -> &[Vec<T>] {
        &self.bufs
    }

    /// Euclidean norm over every buffer, accumulated in `f64`.
    pub fn global_norm(&self) -> f64 {
        self.bufs
            .iter()
            .flatten()
            .map(|g| {
                let g = g.as_f64();
                g * g
            })
            .sum::<f64>()
            .sqrt()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainOptions {
    pub lr: f64,
    /// Global gradient-norm ceiling; `0` disables clipping.
    pub clip: f64,
    /// Inverted-dropout probability on every layer output during training.
    pub dropout: f64,
    pub batch_size: usize,
    pub bptt_len: usize,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            lr: 1.0,
            clip: 0.25,
            dropout: 0.2,
            batch_size: 32,
            bptt_len: 35,
        }
    }
}

impl TrainOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr >= 0.0 && self.lr.is_finite()) || !(self.clip >= 0.0) || !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::InvalidShape(format!("invalid trainer options {self:?}")));
        }
        if self.batch_size == 0 || self.bptt_len == 0 {
            return Err(Error::InvalidShape("batch_size and bptt_len must be positive".into()));
        }
        Ok(())
    }
}

/// Plain SGD with global-norm clipping.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Sgd {
    pub lr: f64,
    pub clip: f64,
}

impl Sgd {
    /// Applies `p -= lr * scale * g` where `scale` shrinks the global norm to
    /// `clip`. Returns the unclipped norm.
    pub fn apply<T: Real>(&self, model: &mut LstmLm<T>, grads: &Gradients<T>) -> f64 {
        let norm = grads.global_norm();
        let scale = if self.clip > 0.0 && norm > self.clip { self.clip / norm } else { 1.0 };
        let step = self.lr * scale;
        for (p, g) in model.params_mut().into_iter().zip(&grads.bufs) {
            for (p, g) in p.iter_mut().zip(g) {
                *p = T::from_f64(p.as_f64() - step * g.as_f64());
            }
        }
        norm
    }
}

#[derive(Clone, Debug)]
pub struct StepStats<T> {
    pub loss: f64,
    pub tokens: usize,
    pub grad_norm: f64,
    pub state: LstmState<T>,
}

impl<T: Real> LstmLm<T> {
    /// Mean window loss, gradients of it, and the carried state.
    pub fn loss_and_grad(
        &self,
        window: &Window,
        state: &LstmState<T>,
        dropout: Option<(&mut Prng, f64)>,
    ) -> Result<(f64, Gradients<T>, LstmState<T>)> {
        let fwd = self.forward(&window.input, window.batch_size, window.len, state, dropout)?;
        if let Some(&bad) = window.target.iter().find(|&&t| t as usize >= self.config.vocab_size) {
            return Err(Error::Vocab(format!("target id {bad} outside vocabulary")));
        }
        let (loss, dlogits) = cross_entropy_grad(&fwd.logits, &window.target, self.config.vocab_size);
        let mut grads = Gradients::zeros_like(self);
        if loss.is_finite() {
            self.backward(&fwd.cache, &dlogits, &mut grads.bufs);
        }
        Ok((loss, grads, fwd.state))
    }

    /// One truncated-BPTT update. The returned state carries values only.
    pub fn bptt_step(&mut self, window: &Window, state: &LstmState<T>, opts: &TrainOptions, rng: &mut Prng) -> Result<StepStats<T>> {
        let dropout = (opts.dropout > 0.0).then_some((rng, opts.dropout));
        let (loss, grads, state) = self.loss_and_grad(window, state, dropout)?;
        if !loss.is_finite() {
            return Err(Error::Diverged { epoch: 0, step: 0 });
        }
        let grad_norm = Sgd {
            lr: opts.lr,
            clip: opts.clip,
        }
        .apply(self, &grads);
        if !grad_norm.is_finite() {
            return Err(Error::Diverged { epoch: 0, step: 0 });
        }
        Ok(StepStats {
            loss,
            tokens: window.tokens(),
            grad_norm,
            state,
        })
    }

    /// One pass over `corpus` with state carried across windows. Returns the
    /// token-weighted mean training loss.
    pub fn train_epoch(&mut self, corpus: &BatchedCorpus, opts: &TrainOptions, rng: &mut Prng, epoch: usize) -> Result<f64> {
        opts.validate()?;
        let mut state = LstmState::zeros(&self.config, corpus.batch_size());
        let (mut total, mut count) = (0.0, 0usize);
        for (step, window) in corpus.windows().enumerate() {
            let stats = self.bptt_step(&window, &state, opts, rng).map_err(|e| match e {
                Error::Diverged { .. } => Error::Diverged { epoch, step },
                e => e,
            })?;
            total += stats.loss * stats.tokens as f64;
            count += stats.tokens;
            state = stats.state;
        }
        Ok(total / count.max(1) as f64)
    }
}
