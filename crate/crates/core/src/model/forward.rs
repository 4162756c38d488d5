use crate::textprep::TokenSeq;
use crate::{Error, Result, Scalar};

use super::{ModelParams, NUM_CLASSES};

/// Probabilities are clamped to this floor before taking the log.
pub const PROB_FLOOR: f64 = 1e-12;

/// Activations kept for backpropagation through time.
pub(crate) struct Trace<T> {
    pub tokens: Vec<u32>,
    /// Activated gates per step, `[steps × 4·hidden]`.
    pub gates: Vec<T>,
    /// Cell states `c_0..=c_T`, `[(steps + 1) × hidden]`.
    pub cells: Vec<T>,
    /// Hidden states `h_0..=h_T`, `[(steps + 1) × hidden]`.
    pub hiddens: Vec<T>,
    pub dense1: Vec<T>,
    pub probs: [T; 2],
}

impl<T: Scalar> Trace<T> {
    pub fn final_hidden(&self, hidden: usize) -> &[T] {
        &self.hiddens[self.hiddens.len() - hidden..]
    }

    pub fn relu(&self) -> impl Iterator<Item = T> + '_ {
        self.dense1.iter().map(|&z| z.max(T::zero()))
    }
}

pub(crate) fn check_seq<T: Scalar>(params: &ModelParams<T>, seq: &TokenSeq) -> Result<()> {
    if seq.true_len > seq.ids.len() {
        return Err(Error::invalid(format!("true_len {} exceeds sequence length {}", seq.true_len, seq.ids.len())));
    }
    let vocab_len = params.config.vocab_len;
    if let Some(&bad) = seq.ids.iter().find(|&&id| id as usize >= vocab_len) {
        return Err(Error::invalid(format!("token id {bad} out of range for vocabulary of {vocab_len}")));
    }
    Ok(())
}

pub(crate) fn softmax<T: Scalar>(z: [T; 2]) -> [T; 2] {
    let m = z[0].max(z[1]);
    let e = [(z[0] - m).exp(), (z[1] - m).exp()];
    let s = e[0] + e[1];
    [e[0] / s, e[1] / s]
}

pub(crate) fn trace<T: Scalar>(params: &ModelParams<T>, seq: &TokenSeq) -> Result<Trace<T>> {
    check_seq(params, seq)?;
    let cfg = &params.config;
    let (e, h, d) = (cfg.embed_dim, cfg.lstm_hidden, cfg.dense_hidden);
    let h4 = 4 * h;
    let t = &params.tensors;
    let tokens = seq.tokens().to_vec();
    let steps = tokens.len();

    let mut gates = Vec::with_capacity(steps * h4);
    let mut cells = vec![T::zero(); h];
    let mut hiddens = vec![T::zero(); h];
    cells.reserve(steps * h);
    hiddens.reserve(steps * h);
    let mut pre = vec![T::zero(); h4];

    for (step, &id) in tokens.iter().enumerate() {
        pre.copy_from_slice(&t.b_gates);
        let x = &t.embedding[id as usize * e..(id as usize + 1) * e];
        for (xe, row) in x.iter().zip(t.w_input.chunks_exact(h4)) {
            for (a, &w) in pre.iter_mut().zip(row) {
                *a += *xe * w;
            }
        }
        let h_prev = &hiddens[step * h..(step + 1) * h];
        for (hj, row) in h_prev.iter().zip(t.w_recurrent.chunks_exact(h4)) {
            for (a, &u) in pre.iter_mut().zip(row) {
                *a += *hj * u;
            }
        }
        for (k, a) in pre.iter_mut().enumerate() {
            *a = if (2 * h..3 * h).contains(&k) { a.tanh() } else { a.sigmoid() };
        }
        gates.extend_from_slice(&pre);

        for j in 0..h {
            let (i, f, g, o) = (pre[j], pre[h + j], pre[2 * h + j], pre[3 * h + j]);
            let c = f * cells[step * h + j] + i * g;
            cells.push(c);
            hiddens.push(o * c.tanh());
        }
    }

    let h_last = &hiddens[steps * h..];
    let mut dense1 = t.b_dense1.clone();
    for (hj, row) in h_last.iter().zip(t.w_dense1.chunks_exact(d)) {
        for (z, &w) in dense1.iter_mut().zip(row) {
            *z += *hj * w;
        }
    }
    let mut logits = [t.b_dense2[0], t.b_dense2[1]];
    for (z, row) in dense1.iter().zip(t.w_dense2.chunks_exact(NUM_CLASSES)) {
        let r = z.max(T::zero());
        logits[0] += r * row[0];
        logits[1] += r * row[1];
    }

    Ok(Trace { tokens, gates, cells, hiddens, dense1, probs: softmax(logits) })
}

/// Class probabilities `[p_negative, p_positive]`. The recurrence runs only
/// over the first `true_len` tokens, so padding never reaches the state.
pub fn forward<T: Scalar>(params: &ModelParams<T>, seq: &TokenSeq) -> Result<[T; 2]> {
    Ok(trace(params, seq)?.probs)
}

/// Categorical cross-entropy `−Σ target·ln(max(prob, 1e-12))`.
pub fn loss<T: Scalar>(probs: &[T; 2], target: &[T; 2]) -> T {
    let floor = T::from_f64_lossy(PROB_FLOOR);
    -probs.iter().zip(target).fold(T::zero(), |acc, (&p, &y)| acc + y * p.max(floor).ln())
}
