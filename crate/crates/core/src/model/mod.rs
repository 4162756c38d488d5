//! Embedding → LSTM → dense(ReLU) → dense(softmax) sentiment classifier.
//!
//! Parameters live in flat row-major buffers. The four LSTM gates share one
//! input matrix `[embed_dim × 4·hidden]`, one recurrent matrix
//! `[hidden × 4·hidden]` and one bias `[4·hidden]`, with column blocks in the
//! order input, forget, cell candidate, output.

mod backward;
mod forward;
mod io;
mod predict;
mod train;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result, Scalar};

pub use backward::{backward, BatchOutcome};
pub use forward::{forward, loss, PROB_FLOOR};
pub use io::{decode_params, encode_params, load_params, save_params, PARAMS_MAGIC};
pub use predict::{Prediction, SentimentModel};
pub use train::{fit, split_indices, train, Adam, EpochStats, TrainConfig, TrainHistory};

pub const NUM_CLASSES: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub vocab_len: usize,
    pub embed_dim: usize,
    pub lstm_hidden: usize,
    pub dense_hidden: usize,
    pub num_classes: usize,
    pub max_len: usize,
    pub seed: u64,
}

impl ModelConfig {
    /// Default dimensions (64 / 64 / 32) for the given vocabulary and sequence length.
    pub fn new(vocab_len: usize, max_len: usize) -> Self {
        ModelConfig {
            vocab_len,
            embed_dim: 64,
            lstm_hidden: 64,
            dense_hidden: 32,
            num_classes: NUM_CLASSES,
            max_len,
            seed: 0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("vocab_len", self.vocab_len),
            ("embed_dim", self.embed_dim),
            ("lstm_hidden", self.lstm_hidden),
            ("dense_hidden", self.dense_hidden),
            ("max_len", self.max_len),
        ];
        if let Some((name, _)) = dims.iter().find(|(_, v)| *v == 0) {
            return Err(Error::invalid(format!("model dimension {name} must be at least 1")));
        }
        if self.num_classes != NUM_CLASSES {
            return Err(Error::invalid(format!("num_classes must be 2, got {}", self.num_classes)));
        }
        Ok(())
    }
}

/// Every trainable tensor of the classifier. Also used for gradients and
/// optimizer moments, which share the parameter shapes.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensors<T> {
    /// `[vocab_len × embed_dim]`
    pub embedding: Vec<T>,
    /// `[embed_dim × 4·hidden]`
    pub w_input: Vec<T>,
    /// `[hidden × 4·hidden]`
    pub w_recurrent: Vec<T>,
    /// `[4·hidden]`
    pub b_gates: Vec<T>,
    /// `[hidden × dense_hidden]`
    pub w_dense1: Vec<T>,
    /// `[dense_hidden]`
    pub b_dense1: Vec<T>,
    /// `[dense_hidden × 2]`
    pub w_dense2: Vec<T>,
    /// `[2]`
    pub b_dense2: Vec<T>,
}

impl<T: Scalar> Tensors<T> {
    /// Tensor names in serialization order.
    pub const NAMES: [&'static str; 8] =
        ["embedding", "w_input", "w_recurrent", "b_gates", "w_dense1", "b_dense1", "w_dense2", "b_dense2"];

    pub fn shapes(config: &ModelConfig) -> [usize; 8] {
        let (v, e, h, d) = (config.vocab_len, config.embed_dim, config.lstm_hidden, config.dense_hidden);
        [v * e, e * 4 * h, h * 4 * h, 4 * h, h * d, d, d * NUM_CLASSES, NUM_CLASSES]
    }

    pub fn zeros(config: &ModelConfig) -> Self {
        let [a, b, c, d, e, f, g, h] = Self::shapes(config).map(|n| vec![T::zero(); n]);
        Tensors {
            embedding: a,
            w_input: b,
            w_recurrent: c,
            b_gates: d,
            w_dense1: e,
            b_dense1: f,
            w_dense2: g,
            b_dense2: h,
        }
    }

    pub fn slices(&self) -> [&[T]; 8] {
        [
            &self.embedding,
            &self.w_input,
            &self.w_recurrent,
            &self.b_gates,
            &self.w_dense1,
            &self.b_dense1,
            &self.w_dense2,
            &self.b_dense2,
        ]
    }

    pub fn slices_mut(&mut self) -> [&mut Vec<T>; 8] {
        [
            &mut self.embedding,
            &mut self.w_input,
            &mut self.w_recurrent,
            &mut self.b_gates,
            &mut self.w_dense1,
            &mut self.b_dense1,
            &mut self.w_dense2,
            &mut self.b_dense2,
        ]
    }

    pub fn len(&self) -> usize {
        self.slices().iter().map(|s| s.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn all_finite(&self) -> bool {
        self.slices().iter().all(|s| s.iter().all(|v| v.is_finite()))
    }

    pub fn squared_norm(&self) -> T {
        self.slices().iter().flat_map(|s| s.iter()).fold(T::zero(), |acc, &v| acc + v * v)
    }

    pub fn scale(&mut self, factor: T) {
        for s in self.slices_mut() {
            s.iter_mut().for_each(|v| *v *= factor);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<T> {
    pub config: ModelConfig,
    /// Content fingerprint, stamped on every sentiment written with these parameters.
    pub version: String,
    pub tensors: Tensors<T>,
}

impl<T: Scalar> ModelParams<T> {
    /// FNV-1a over the config and every tensor value widened to `f64`.
    pub fn fingerprint(&self) -> String {
        let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
        let mut feed = |bytes: &[u8]| {
            for &b in bytes {
                hash ^= u64::from(b);
                hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
            }
        };
        feed(serde_json::to_string(&self.config).expect("config serializes").as_bytes());
        for s in self.tensors.slices() {
            for v in s {
                feed(&v.to_f64_lossy().to_le_bytes());
            }
        }
        format!("{hash:016x}")
    }

    pub fn refresh_version(&mut self) {
        self.version = self.fingerprint();
    }
}

/// Seeded initialization: every weight matrix ~ U(−s, s) with
/// `s = sqrt(6 / (fan_in + fan_out))` (per gate for the LSTM), biases zero
/// except the forget-gate bias which starts at 1.
pub fn init_model<T: Scalar>(config: &ModelConfig) -> Result<ModelParams<T>> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut tensors = Tensors::<T>::zeros(config);
    let (v, e, h, d) = (config.vocab_len, config.embed_dim, config.lstm_hidden, config.dense_hidden);

    let mut fill = |buf: &mut [T], fan_in: usize, fan_out: usize| {
        let s = (6.0 / (fan_in + fan_out) as f64).sqrt();
        for x in buf.iter_mut() {
            *x = T::from_f64_lossy(rng.random_range(-s..s));
        }
    };
    fill(&mut tensors.embedding, v, e);
    fill(&mut tensors.w_input, e, h);
    fill(&mut tensors.w_recurrent, h, h);
    fill(&mut tensors.w_dense1, h, d);
    fill(&mut tensors.w_dense2, d, NUM_CLASSES);
    tensors.b_gates[h..2 * h].iter_mut().for_each(|b| *b = T::one());

    let mut params = ModelParams { config: *config, version: String::new(), tensors };
    params.refresh_version();
    Ok(params)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> ModelConfig {
        ModelConfig { vocab_len: 7, embed_dim: 4, lstm_hidden: 3, dense_hidden: 5, num_classes: 2, max_len: 5, seed: 3 }
    }

    #[test]
    fn init_is_deterministic() {
        let a = init_model::<f64>(&tiny()).unwrap();
        let b = init_model::<f64>(&tiny()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.version, b.version);
    }

    #[test]
    fn forget_bias_starts_at_one() {
        let p = init_model::<f32>(&tiny()).unwrap();
        let h = tiny().lstm_hidden;
        assert!(p.tensors.b_gates[h..2 * h].iter().all(|&b| b == 1.0));
        assert!(p.tensors.b_gates[..h].iter().all(|&b| b == 0.0));
        assert!(p.tensors.b_gates[2 * h..].iter().all(|&b| b == 0.0));
        assert!(p.tensors.b_dense1.iter().chain(&p.tensors.b_dense2).all(|&b| b == 0.0));
    }

    #[test]
    fn seeds_change_embedding() {
        let a = init_model::<f64>(&tiny()).unwrap();
        let b = init_model::<f64>(&tiny().with_seed(4)).unwrap();
        assert_ne!(a.tensors.embedding, b.tensors.embedding);
        assert_ne!(a.version, b.version);
    }

    #[test]
    fn weights_respect_glorot_bound() {
        let cfg = tiny();
        let p = init_model::<f64>(&cfg).unwrap();
        let s = (6.0f64 / (cfg.embed_dim + cfg.lstm_hidden) as f64).sqrt();
        assert!(p.tensors.w_input.iter().all(|w| w.abs() < s));
        assert_eq!(p.tensors.len(), Tensors::<f64>::shapes(&cfg).iter().sum::<usize>());
    }

    #[test]
    fn zero_dims_rejected() {
        let mut cfg = tiny();
        cfg.embed_dim = 0;
        assert!(matches!(init_model::<f64>(&cfg), Err(Error::InvalidArgument(_))));
        let mut cfg = tiny();
        cfg.num_classes = 3;
        assert!(init_model::<f64>(&cfg).is_err());
    }
}
