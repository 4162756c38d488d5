use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::label::{argmax, one_hot};
use crate::textprep::{clean_text, vectorize, CleanConfig, TokenSeq, Vocabulary};
use crate::{Error, Result, Scalar, Sentiment};

use super::forward::{forward, loss};
use super::{backward, init_model, ModelConfig, ModelParams, Tensors};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Fraction of the dataset used for training; the rest is validation.
    pub split_ratio: f64,
    pub shuffle_seed: u64,
    /// Rescale gradients whose global L2 norm exceeds this value.
    pub clip_norm: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { epochs: 8, batch_size: 32, learning_rate: 1e-3, split_ratio: 0.8, shuffle_seed: 0, clip_norm: None }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::invalid("epochs must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size must be at least 1"));
        }
        if !(self.split_ratio > 0.0 && self.split_ratio < 1.0) {
            return Err(Error::invalid(format!("split_ratio must lie in (0, 1), got {}", self.split_ratio)));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid("learning_rate must be positive"));
        }
        if self.clip_norm.is_some_and(|c| c.is_nan() || c <= 0.0) {
            return Err(Error::invalid("clip_norm must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    pub val_loss: f64,
    pub val_acc: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochStats>,
}

impl TrainHistory {
    pub fn last(&self) -> Option<&EpochStats> {
        self.epochs.last()
    }
}

/// Adam with bias-corrected moments.
#[derive(Debug, Clone)]
pub struct Adam<T> {
    pub learning_rate: T,
    pub beta1: T,
    pub beta2: T,
    pub epsilon: T,
    m: Tensors<T>,
    v: Tensors<T>,
    step: i32,
}

impl<T: Scalar> Adam<T> {
    pub fn new(config: &ModelConfig, learning_rate: f64) -> Self {
        Adam {
            learning_rate: T::from_f64_lossy(learning_rate),
            beta1: T::from_f64_lossy(0.9),
            beta2: T::from_f64_lossy(0.999),
            epsilon: T::from_f64_lossy(1e-8),
            m: Tensors::zeros(config),
            v: Tensors::zeros(config),
            step: 0,
        }
    }

    pub fn step(&mut self, params: &mut Tensors<T>, grads: &Tensors<T>) {
        self.step += 1;
        let one = T::one();
        let c1 = one - self.beta1.powi(self.step);
        let c2 = one - self.beta2.powi(self.step);
        let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.learning_rate, self.epsilon);
        let it = params.slices_mut().into_iter().zip(self.m.slices_mut()).zip(self.v.slices_mut()).zip(grads.slices());
        for (((p, m), v), g) in it {
            for i in 0..p.len() {
                m[i] = b1 * m[i] + (one - b1) * g[i];
                v[i] = b2 * v[i] + (one - b2) * g[i] * g[i];
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                p[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
    }
}

/// Deterministic shuffled split into `(train, validation)` index lists.
/// Both sides are non-empty when `n ≥ 2`.
pub fn split_indices(n: usize, ratio: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let cut = if n < 2 { n } else { ((n as f64 * ratio).round() as usize).clamp(1, n - 1) };
    let val = idx.split_off(cut);
    (idx, val)
}

fn evaluate_set<T: Scalar>(params: &ModelParams<T>, set: &[(TokenSeq, Sentiment)]) -> Result<(f64, f64)> {
    if set.is_empty() {
        return Ok((0.0, 0.0));
    }
    let mut total = 0.0;
    let mut correct = 0usize;
    for (seq, label) in set {
        let probs = forward(params, seq)?;
        total += loss(&probs, &one_hot::<T>(*label)).to_f64_lossy();
        if argmax(&probs) == *label {
            correct += 1;
        }
    }
    Ok((total / set.len() as f64, correct as f64 / set.len() as f64))
}

/// Mini-batch Adam over already-vectorized samples, starting from `params`.
/// Each epoch reshuffles the training set with a stream seeded from
/// `shuffle_seed`.
pub fn fit<T: Scalar>(
    params: &mut ModelParams<T>,
    train_set: &[(TokenSeq, Sentiment)],
    val_set: &[(TokenSeq, Sentiment)],
    config: &TrainConfig,
) -> Result<TrainHistory> {
    config.validate()?;
    if train_set.is_empty() {
        return Err(Error::invalid("training set is empty"));
    }
    let mut adam = Adam::new(&params.config, config.learning_rate);
    let mut rng = ChaCha8Rng::seed_from_u64(config.shuffle_seed.wrapping_add(0x9e37_79b9_7f4a_7c15));
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut history = TrainHistory::default();
    let mut batch = Vec::with_capacity(config.batch_size);

    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        for chunk in order.chunks(config.batch_size) {
            batch.clear();
            batch.extend(chunk.iter().map(|&i| train_set[i].clone()));
            let (mut grads, outcome) = backward(params, &batch)?;
            loss_sum += outcome.mean_loss.to_f64_lossy() * chunk.len() as f64;
            correct += outcome.correct;
            if let Some(max_norm) = config.clip_norm {
                let norm = grads.squared_norm().sqrt().to_f64_lossy();
                if norm > max_norm {
                    grads.scale(T::from_f64_lossy(max_norm / norm));
                }
            }
            adam.step(&mut params.tensors, &grads);
        }
        if !params.tensors.all_finite() {
            return Err(Error::invalid(format!("parameters diverged in epoch {epoch}; consider clip_norm")));
        }
        let (val_loss, val_acc) = evaluate_set(params, val_set)?;
        let n = train_set.len() as f64;
        history.epochs.push(EpochStats { epoch, train_loss: loss_sum / n, train_acc: correct as f64 / n, val_loss, val_acc });
    }
    params.refresh_version();
    Ok(history)
}

/// Clean, vectorize, split and train a freshly initialized model.
pub fn train<T: Scalar>(
    dataset: &[(String, Sentiment)],
    model_config: &ModelConfig,
    train_config: &TrainConfig,
    vocab: &Vocabulary,
    clean: &CleanConfig,
) -> Result<(ModelParams<T>, TrainHistory)> {
    train_config.validate()?;
    model_config.validate()?;
    if dataset.len() < 10 {
        return Err(Error::invalid(format!("dataset needs at least 10 samples, got {}", dataset.len())));
    }
    for class in Sentiment::ALL {
        if !dataset.iter().any(|(_, l)| *l == class) {
            return Err(Error::invalid(format!("dataset has no {class} samples")));
        }
    }
    if model_config.vocab_len != vocab.len() {
        return Err(Error::VersionMismatch(format!(
            "model vocab_len {} differs from vocabulary size {}",
            model_config.vocab_len,
            vocab.len()
        )));
    }

    let encoded: Vec<(TokenSeq, Sentiment)> = dataset
        .iter()
        .map(|(text, label)| (vectorize(&clean_text(text, clean), vocab, model_config.max_len), *label))
        .collect();
    let (train_idx, val_idx) = split_indices(encoded.len(), train_config.split_ratio, train_config.shuffle_seed);
    let train_set: Vec<_> = train_idx.iter().map(|&i| encoded[i].clone()).collect();
    let val_set: Vec<_> = val_idx.iter().map(|&i| encoded[i].clone()).collect();

    let mut params = init_model::<T>(model_config)?;
    let history = fit(&mut params, &train_set, &val_set, train_config)?;
    Ok((params, history))
}
