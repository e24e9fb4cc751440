use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::corpus::BatchedCorpus;
use crate::lstm::{LstmLm, TrainOptions};
use crate::metrics::perplexity;
use crate::tensor::{prng, Real};
use crate::{Error, Result};

/// One line of the training log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_ppl: f64,
    pub valid_ppl: f64,
    pub lr: f64,
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitOptions {
    pub train: TrainOptions,
    /// Divide the learning rate by this factor after an epoch that does not
    /// improve validation perplexity; `1` keeps it constant.
    pub anneal: f64,
    pub seed: u64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            train: TrainOptions::default(),
            anneal: 4.0,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct FitOutcome<T> {
    /// Lowest validation perplexity seen, including the starting model.
    pub model: LstmLm<T>,
    pub history: Vec<EpochRecord>,
    pub initial_valid_ppl: Option<f64>,
    pub best_valid_ppl: Option<f64>,
    /// `0` when no epoch improved on the starting model.
    pub best_epoch: usize,
}

/// Trains for `epochs` passes over `train`, evaluating `valid` after each,
/// and keeps the best-validation snapshot. `on_epoch` sees every record as
/// it is produced.
pub fn fit<T: Real>(
    model: &LstmLm<T>,
    train: &BatchedCorpus,
    valid: &BatchedCorpus,
    epochs: usize,
    opts: &FitOptions,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<FitOutcome<T>> {
    if epochs == 0 {
        return Ok(FitOutcome {
            model: model.clone(),
            history: Vec::new(),
            initial_valid_ppl: None,
            best_valid_ppl: None,
            best_epoch: 0,
        });
    }
    opts.train.validate()?;
    if !(opts.anneal >= 1.0) {
        return Err(Error::InvalidShape(format!("anneal factor {} must be >= 1", opts.anneal)));
    }
    let mut train_opts = opts.train.clone();
    train_opts.batch_size = train.batch_size();
    train_opts.bptt_len = train.bptt_len();
    let mut rng = prng(opts.seed);
    let initial = perplexity(model, valid)?.perplexity;
    let mut best = (initial, 0, model.clone());
    let mut current = model.clone();
    let mut history = Vec::with_capacity(epochs);
    for epoch in 1..=epochs {
        let start = Instant::now();
        let train_loss = current.train_epoch(train, &train_opts, &mut rng, epoch)?;
        let valid_ppl = perplexity(&current, valid)?.perplexity;
        let record = EpochRecord {
            epoch,
            train_ppl: train_loss.exp(),
            valid_ppl,
            lr: train_opts.lr,
            seconds: start.elapsed().as_secs_f64(),
        };
        on_epoch(&record);
        history.push(record);
        if valid_ppl < best.0 {
            best = (valid_ppl, epoch, current.clone());
        } else {
            train_opts.lr /= opts.anneal;
        }
    }
    Ok(FitOutcome {
        model: best.2,
        history,
        initial_valid_ppl: Some(initial),
        best_valid_ppl: Some(best.0),
        best_epoch: best.1,
    })
}

/// [`fit`] applied to an already trained, possibly compressed, model.
pub fn finetune<T: Real>(
    model: &LstmLm<T>,
    train: &BatchedCorpus,
    valid: &BatchedCorpus,
    epochs: usize,
    opts: &FitOptions,
) -> Result<FitOutcome<T>> {
    fit(model, train, valid, epochs, opts, |_| {})
}
