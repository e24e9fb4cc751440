use serde::{Deserialize, Serialize};

use crate::corpus::BatchedCorpus;
use crate::lstm::{cross_entropy, LstmLm, LstmState};
use crate::tensor::Real;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub perplexity: f64,
    pub tokens: usize,
    pub params: usize,
}

/// `exp` of the mean per-token cross-entropy over every window of `corpus`,
/// with state carried across windows and dropout off.
pub fn perplexity<T: Real>(model: &LstmLm<T>, corpus: &BatchedCorpus) -> Result<EvalResult> {
    let v = model.config().vocab_size;
    if corpus.max_id() as usize >= v {
        return Err(Error::Vocab(format!(
            "corpus contains id {} but the model vocabulary has {v} tokens",
            corpus.max_id()
        )));
    }
    let mut state = LstmState::zeros(model.config(), corpus.batch_size());
    let (mut total, mut tokens) = (0.0, 0usize);
    for w in corpus.windows() {
        let fwd = model.lm_forward(&w.input, w.batch_size, w.len, &state)?;
        let (loss, n) = cross_entropy(&fwd.logits, &w.target, v);
        total += loss * n as f64;
        tokens += n;
        state = fwd.state;
    }
    Ok(EvalResult {
        perplexity: (total / tokens.max(1) as f64).exp(),
        tokens,
        params: model.param_counts().total,
    })
}

/// Signed relative change `(a - b) / max(a, b)`.
pub fn relative_change(a: f64, b: f64) -> f64 {
    (a - b) / a.max(b)
}

/// Relative metric loss over relative parameter reduction. For
/// lower-is-better metrics the numerator is `R(M_r, M)`, otherwise
/// `R(M, M_r)`; a negative value means the compressed model is better.
pub fn efficiency(metric_base: f64, metric_compressed: f64, params_base: f64, params_compressed: f64, lower_is_better: bool) -> Result<f64> {
    let all = [metric_base, metric_compressed, params_base, params_compressed];
    if all.iter().any(|x| !x.is_finite() || *x <= 0.0) {
        return Err(Error::InvalidShape(format!("efficiency inputs must be positive and finite, got {all:?}")));
    }
    if params_compressed >= params_base {
        return Err(Error::DegenerateCompression {
            base: params_base,
            compressed: params_compressed,
        });
    }
    let metric = if lower_is_better {
        relative_change(metric_compressed, metric_base)
    } else {
        relative_change(metric_base, metric_compressed)
    };
    Ok(metric / relative_change(params_base, params_compressed))
}
