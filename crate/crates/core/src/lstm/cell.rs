use super::slot::WeightSlot;
use crate::tensor::Real;
use crate::{Error, Result};

/// One LSTM layer: `W_i` (`4H x n_inp`), `W_h` (`4H x H`) and a bias of
/// length `4H`. Gate blocks are stacked by rows in the order input, forget,
/// output, cell candidate.
#[derive(Clone, Debug, PartialEq)]
pub struct GateWeights<T = f32> {
    pub(crate) w_i: WeightSlot<T>,
    pub(crate) w_h: WeightSlot<T>,
    pub(crate) bias: Vec<T>,
}

impl<T: Real> GateWeights<T> {
    pub fn new(w_i: WeightSlot<T>, w_h: WeightSlot<T>, bias: Vec<T>) -> Result<Self> {
        let (gi, _) = w_i.shape();
        let (gh, h) = w_h.shape();
        if gi != gh || gh != 4 * h || bias.len() != gh {
            return Err(Error::Shape(format!(
                "gate weights need W_i 4Hxn, W_h 4HxH, bias 4H; got W_i {:?}, W_h {:?}, bias {}",
                w_i.shape(),
                w_h.shape(),
                bias.len()
            )));
        }
        Ok(Self { w_i, w_h, bias })
    }

    pub fn hidden_dim(&self) -> usize {
        self.w_h.shape().1
    }

    pub fn input_dim(&self) -> usize {
        self.w_i.shape().1
    }

    pub fn w_i(&self) -> &WeightSlot<T> {
        &self.w_i
    }

    pub fn w_h(&self) -> &WeightSlot<T> {
        &self.w_h
    }

    pub fn bias(&self) -> &[T] {
        &self.bias
    }

    /// One time step for a single sequence: returns `(h, c)`.
    pub fn cell_forward(&self, x: &[T], h_prev: &[T], c_prev: &[T]) -> Result<(Vec<T>, Vec<T>)> {
        let h = self.hidden_dim();
        if x.len() != self.input_dim() || h_prev.len() != h || c_prev.len() != h {
            return Err(Error::Shape(format!(
                "cell expects x {}, h {h}, c {h}; got {}, {}, {}",
                self.input_dim(),
                x.len(),
                h_prev.len(),
                c_prev.len()
            )));
        }
        let mut pre = vec![T::zero(); 4 * h];
        let mut tmp = vec![T::zero(); 4 * h];
        self.w_i.apply_vec(x, &mut pre);
        self.w_h.apply_vec(h_prev, &mut tmp);
        for ((p, t), b) in pre.iter_mut().zip(&tmp).zip(&self.bias) {
            *p += *t + *b;
        }
        activate_gates(&mut pre, h);
        let mut c = vec![T::zero(); h];
        let mut h_out = vec![T::zero(); h];
        cell_update(&pre, c_prev, &mut c, &mut h_out);
        Ok((h_out, c))
    }

    pub fn cast<U: Real>(&self) -> GateWeights<U> {
        GateWeights {
            w_i: self.w_i.cast(),
            w_h: self.w_h.cast(),
            bias: self.bias.iter().map(|b| U::from_f64(b.as_f64())).collect(),
        }
    }
}

#[inline]
pub(crate) fn sigmoid<T: Real>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

/// Applies sigmoid to the i, f, o blocks and tanh to the candidate block of
/// one `4H` pre-activation row.
#[inline]
pub(crate) fn activate_gates<T: Real>(row: &mut [T], h: usize) {
    for v in &mut row[..3 * h] {
        *v = sigmoid(*v);
    }
    for v in &mut row[3 * h..4 * h] {
        *v = v.tanh();
    }
}

/// `c = f ⊙ c_prev + i ⊙ ĉ`, `h = o ⊙ tanh(c)` from one activated gate row.
#[inline]
pub(crate) fn cell_update<T: Real>(acts: &[T], c_prev: &[T], c: &mut [T], h_out: &mut [T]) {
    let h = c.len();
    let (i, rest) = acts.split_at(h);
    let (f, rest) = rest.split_at(h);
    let (o, g) = rest.split_at(h);
    for j in 0..h {
        c[j] = f[j] * c_prev[j] + i[j] * g[j];
        h_out[j] = o[j] * c[j].tanh();
    }
}
