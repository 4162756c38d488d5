use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::label::argmax;
use crate::textprep::{clean_text, vectorize, CleanConfig, Vocabulary};
use crate::{Error, Result, Scalar, Sentiment};

use super::forward::forward;
use super::{load_params, ModelParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub label: Sentiment,
    /// Probability of the predicted class.
    pub confidence: f64,
}

/// Immutable inference bundle: parameters, the vocabulary they were trained
/// with, and the cleaning rules. Safe to share across threads.
#[derive(Debug, Clone)]
pub struct SentimentModel<T> {
    params: ModelParams<T>,
    vocab: Vocabulary,
    clean: CleanConfig,
}

impl<T: Scalar> SentimentModel<T> {
    pub fn new(params: ModelParams<T>, vocab: Vocabulary, clean: CleanConfig) -> Result<Self> {
        if params.config.vocab_len != vocab.len() {
            return Err(Error::VersionMismatch(format!(
                "parameters expect {} vocabulary ids, vocabulary has {}",
                params.config.vocab_len,
                vocab.len()
            )));
        }
        Ok(SentimentModel { params, vocab, clean })
    }

    /// Load a parameter file and vocabulary file and check they belong together.
    pub fn load(params_path: impl AsRef<Path>, vocab_path: impl AsRef<Path>, clean: CleanConfig) -> Result<Self> {
        let params = load_params::<T>(params_path)?;
        let (vocab, max_len) = Vocabulary::load(vocab_path)?;
        if max_len != params.config.max_len {
            return Err(Error::VersionMismatch(format!(
                "vocabulary max_len {max_len} differs from model max_len {}",
                params.config.max_len
            )));
        }
        Self::new(params, vocab, clean)
    }

    pub fn params(&self) -> &ModelParams<T> {
        &self.params
    }

    pub fn vocabulary(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn clean_config(&self) -> &CleanConfig {
        &self.clean
    }

    pub fn version(&self) -> &str {
        &self.params.version
    }

    pub fn probabilities(&self, raw_text: &str) -> [T; 2] {
        let seq = vectorize(&clean_text(raw_text, &self.clean), &self.vocab, self.params.config.max_len);
        forward(&self.params, &seq).expect("vocabulary ids are within the model's range")
    }

    pub fn predict(&self, raw_text: &str) -> Prediction {
        let probs = self.probabilities(raw_text);
        let label = argmax(&probs);
        Prediction { label, confidence: probs[label.index()].to_f64_lossy() }
    }
}
