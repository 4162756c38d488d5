#![allow(clippy::needless_range_loop)]

use crate::label::{argmax, one_hot};
use crate::textprep::TokenSeq;
use crate::{Error, Result, Scalar, Sentiment};

use super::forward::{loss, trace, Trace, PROB_FLOOR};
use super::{ModelParams, Tensors, NUM_CLASSES};

/// Loss and accuracy of the batch as seen by the forward pass that produced
/// the gradients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatchOutcome<T> {
    pub mean_loss: T,
    pub correct: usize,
}

/// Exact gradients of the mean cross-entropy over `batch` with respect to
/// every parameter, by backpropagation through time.
pub fn backward<T: Scalar>(
    params: &ModelParams<T>,
    batch: &[(TokenSeq, Sentiment)],
) -> Result<(Tensors<T>, BatchOutcome<T>)> {
    if batch.is_empty() {
        return Err(Error::invalid("backward needs a non-empty batch"));
    }
    let mut grads = Tensors::zeros(&params.config);
    let scale = T::one() / T::from_usize(batch.len()).expect("batch size fits");
    let mut total = T::zero();
    let mut correct = 0;
    for (seq, label) in batch {
        let tr = trace(params, seq)?;
        let target = one_hot::<T>(*label);
        total += loss(&tr.probs, &target);
        if argmax(&tr.probs) == *label {
            correct += 1;
        }
        accumulate(params, &tr, &target, scale, &mut grads);
    }
    Ok((grads, BatchOutcome { mean_loss: total * scale, correct }))
}

fn accumulate<T: Scalar>(params: &ModelParams<T>, tr: &Trace<T>, target: &[T; 2], scale: T, g: &mut Tensors<T>) {
    let cfg = &params.config;
    let (e, h, d) = (cfg.embed_dim, cfg.lstm_hidden, cfg.dense_hidden);
    let h4 = 4 * h;
    let p = &params.tensors;
    let one = T::one();

    // Softmax + floored cross-entropy: terms whose probability sits below the
    // floor are constant and contribute nothing.
    let floor = T::from_f64_lossy(PROB_FLOOR);
    let mask: [T; 2] = std::array::from_fn(|k| if tr.probs[k] > floor { target[k] } else { T::zero() });
    let mass = mask[0] + mask[1];
    let dlogits: [T; 2] = std::array::from_fn(|k| (tr.probs[k] * mass - mask[k]) * scale);

    let relu: Vec<T> = tr.relu().collect();
    let mut dz1 = vec![T::zero(); d];
    for k in 0..d {
        let row = &p.w_dense2[k * NUM_CLASSES..(k + 1) * NUM_CLASSES];
        let grow = &mut g.w_dense2[k * NUM_CLASSES..(k + 1) * NUM_CLASSES];
        for c in 0..NUM_CLASSES {
            grow[c] += relu[k] * dlogits[c];
        }
        if tr.dense1[k] > T::zero() {
            dz1[k] = row[0] * dlogits[0] + row[1] * dlogits[1];
        }
    }
    for c in 0..NUM_CLASSES {
        g.b_dense2[c] += dlogits[c];
    }

    let h_last = tr.final_hidden(h);
    let mut dh = vec![T::zero(); h];
    for j in 0..h {
        let row = &p.w_dense1[j * d..(j + 1) * d];
        let grow = &mut g.w_dense1[j * d..(j + 1) * d];
        let mut acc = T::zero();
        for k in 0..d {
            grow[k] += h_last[j] * dz1[k];
            acc += row[k] * dz1[k];
        }
        dh[j] = acc;
    }
    for k in 0..d {
        g.b_dense1[k] += dz1[k];
    }

    let mut dc = vec![T::zero(); h];
    let mut da = vec![T::zero(); h4];
    for step in (0..tr.tokens.len()).rev() {
        let gate = &tr.gates[step * h4..(step + 1) * h4];
        let c_prev = &tr.cells[step * h..(step + 1) * h];
        let c_now = &tr.cells[(step + 1) * h..(step + 2) * h];
        let h_prev = &tr.hiddens[step * h..(step + 1) * h];
        for j in 0..h {
            let (i, f, gg, o) = (gate[j], gate[h + j], gate[2 * h + j], gate[3 * h + j]);
            let tc = c_now[j].tanh();
            let d_o = dh[j] * tc;
            let dcj = dc[j] + dh[j] * o * (one - tc * tc);
            da[j] = dcj * gg * i * (one - i);
            da[h + j] = dcj * c_prev[j] * f * (one - f);
            da[2 * h + j] = dcj * i * (one - gg * gg);
            da[3 * h + j] = d_o * o * (one - o);
            dc[j] = dcj * f;
        }

        let id = tr.tokens[step] as usize;
        let x = &p.embedding[id * e..(id + 1) * e];
        for m in 0..e {
            let row = &p.w_input[m * h4..(m + 1) * h4];
            let grow = &mut g.w_input[m * h4..(m + 1) * h4];
            let mut dx = T::zero();
            for k in 0..h4 {
                grow[k] += x[m] * da[k];
                dx += row[k] * da[k];
            }
            g.embedding[id * e + m] += dx;
        }
        for j in 0..h {
            let row = &p.w_recurrent[j * h4..(j + 1) * h4];
            let grow = &mut g.w_recurrent[j * h4..(j + 1) * h4];
            let mut acc = T::zero();
            for k in 0..h4 {
                grow[k] += h_prev[j] * da[k];
                acc += row[k] * da[k];
            }
            dh[j] = acc;
        }
        for k in 0..h4 {
            g.b_gates[k] += da[k];
        }
    }
}
