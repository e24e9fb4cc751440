use super::TokenId;
use crate::{Error, Result};

/// Token stream cut into `batch_size` contiguous rows of `stream_len` ids.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BatchedCorpus {
    data: Vec<TokenId>,
    batch_size: usize,
    stream_len: usize,
    bptt_len: usize,
}

/// One training/evaluation window: `input[b][t]` predicts `target[b][t]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Window {
    /// `batch_size x len`, row-major.
    pub input: Vec<TokenId>,
    pub target: Vec<TokenId>,
    pub batch_size: usize,
    pub len: usize,
}

impl Window {
    pub fn tokens(&self) -> usize {
        self.batch_size * self.len
    }
}

/// Drops the tail that does not fill a whole row; row `b` holds
/// `ids[b * stream_len..(b + 1) * stream_len]`.
pub fn batchify(ids: &[TokenId], batch_size: usize, bptt_len: usize) -> Result<BatchedCorpus> {
    if batch_size == 0 || bptt_len == 0 {
        return Err(Error::InvalidShape("batch size and bptt length must be positive".into()));
    }
    if ids.len() < batch_size * 2 {
        return Err(Error::CorpusTooShort {
            len: ids.len(),
            needed: batch_size * 2,
        });
    }
    let stream_len = ids.len() / batch_size;
    Ok(BatchedCorpus {
        data: ids[..stream_len * batch_size].to_vec(),
        batch_size,
        stream_len,
        bptt_len,
    })
}

impl BatchedCorpus {
    pub fn batch_size(&self) -> usize {
        self.batch_size
    }

    pub fn stream_len(&self) -> usize {
        self.stream_len
    }

    pub fn bptt_len(&self) -> usize {
        self.bptt_len
    }

    pub fn with_bptt(mut self, bptt_len: usize) -> Self {
        assert!(bptt_len > 0, "bptt length must be positive");
        self.bptt_len = bptt_len;
        self
    }

    pub fn row(&self, b: usize) -> &[TokenId] {
        &self.data[b * self.stream_len..(b + 1) * self.stream_len]
    }

    pub fn max_id(&self) -> TokenId {
        self.data.iter().copied().max().unwrap_or(0)
    }

    pub fn num_windows(&self) -> usize {
        (self.stream_len - 1).div_ceil(self.bptt_len)
    }

    /// Targets served per pass: `batch_size * (stream_len - 1)`.
    pub fn num_targets(&self) -> usize {
        self.batch_size * (self.stream_len - 1)
    }

    pub fn window(&self, index: usize) -> Window {
        let start = index * self.bptt_len;
        assert!(start < self.stream_len - 1, "window {index} out of range");
        let len = self.bptt_len.min(self.stream_len - 1 - start);
        let mut input = Vec::with_capacity(self.batch_size * len);
        let mut target = Vec::with_capacity(self.batch_size * len);
        for b in 0..self.batch_size {
            let row = self.row(b);
            input.extend_from_slice(&row[start..start + len]);
            target.extend_from_slice(&row[start + 1..start + 1 + len]);
        }
        Window {
            input,
            target,
            batch_size: self.batch_size,
            len,
        }
    }

    pub fn windows(&self) -> impl Iterator<Item = Window> + '_ {
        (0..self.num_windows()).map(move |i| self.window(i))
    }
}

/// Contiguous train/valid/test split by fractions of the stream.
pub fn split_stream(ids: &[TokenId], valid_frac: f64, test_frac: f64) -> (Vec<TokenId>, Vec<TokenId>, Vec<TokenId>) {
    let n = ids.len();
    let n_valid = (n as f64 * valid_frac).round() as usize;
    let n_test = (n as f64 * test_frac).round() as usize;
    let n_train = n.saturating_sub(n_valid + n_test);
    let (train, rest) = ids.split_at(n_train);
    let (valid, test) = rest.split_at(n_valid.min(rest.len()));
    (train.to_vec(), valid.to_vec(), test.to_vec())
}
