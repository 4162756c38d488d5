//! Text cleaning and vectorization shared by training and inference.

mod clean;
mod vocab;

pub use clean::{clean_text, CleanConfig, EmojiStyle, INDONESIAN_STOPWORDS};
pub use vocab::{build_vocabulary, vectorize, TokenSeq, Vocabulary, VocabularyFile, OOV_ID, PAD_ID};

/// Default fixed sequence length fed to the model.
pub const DEFAULT_MAX_LEN: usize = 64;
/// Default vocabulary capacity, reserved ids included.
pub const DEFAULT_VOCAB_SIZE: usize = 10_000;
