use std::collections::BTreeSet;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Indonesian stopword list shipped with the crate, one lowercase token per line.
pub const INDONESIAN_STOPWORDS: &str = include_str!("stopwords_id.txt");

static URL: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?:https?://|www\.)\S+").unwrap());
static HASHTAG: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"#\w+").unwrap());
static MENTION: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"@\w+").unwrap());
// Hyphens and apostrophes are resolved separately: kept only inside a word.
static PUNCT: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"[\p{P}--[\-'’]]").unwrap());
static MARKER: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^:[a-z0-9_]+:$").unwrap());

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmojiStyle {
    /// Remove emoji entirely (inference-time cleaning).
    #[default]
    Drop,
    /// Replace each emoji with a `:lowercase_name:` token.
    NamedMarker,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CleanConfig {
    stopwords: BTreeSet<String>,
    emoji: EmojiStyle,
}

impl CleanConfig {
    pub fn new<I, S>(stopwords: I, emoji: EmojiStyle) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut set = BTreeSet::new();
        for word in stopwords {
            let word = word.into();
            if word.is_empty() || word.chars().any(char::is_whitespace) {
                return Err(Error::invalid(format!("stopword {word:?} is empty or contains whitespace")));
            }
            if word.to_lowercase() != word {
                return Err(Error::invalid(format!("stopword {word:?} is not lowercase")));
            }
            set.insert(word);
        }
        Ok(CleanConfig { stopwords: set, emoji })
    }

    /// Shipped Indonesian stopwords with emoji dropped.
    pub fn indonesian() -> Self {
        Self::new(INDONESIAN_STOPWORDS.lines().map(str::trim).filter(|l| !l.is_empty()), EmojiStyle::Drop)
            .expect("shipped stopword list is valid")
    }

    pub fn without_stopwords(emoji: EmojiStyle) -> Self {
        CleanConfig { stopwords: BTreeSet::new(), emoji }
    }

    pub fn with_emoji_style(mut self, emoji: EmojiStyle) -> Self {
        self.emoji = emoji;
        self
    }

    pub fn emoji_style(&self) -> EmojiStyle {
        self.emoji
    }

    pub fn is_stopword(&self, token: &str) -> bool {
        self.stopwords.contains(token)
    }
}

impl Default for CleanConfig {
    fn default() -> Self {
        Self::indonesian()
    }
}

/// Emoji code point ranges: emoticons, symbols & pictographs (and their
/// extensions), transport, regional-indicator flags, supplemental symbols,
/// misc symbols and dingbats.
fn is_emoji(c: char) -> bool {
    matches!(c as u32,
        0x1F600..=0x1F64F
        | 0x1F300..=0x1F5FF
        | 0x1F680..=0x1F6FF
        | 0x1F1E6..=0x1F1FF
        | 0x1F900..=0x1F9FF
        | 0x1FA70..=0x1FAFF
        | 0x2600..=0x27BF)
}

fn is_emoji_joiner(c: char) -> bool {
    matches!(c, '\u{200D}' | '\u{FE0E}' | '\u{FE0F}')
}

fn emoji_marker(c: char) -> String {
    let name = match unicode_names2::name(c) {
        Some(name) => name
            .to_string()
            .chars()
            .map(|ch| if ch.is_ascii_alphanumeric() { ch.to_ascii_lowercase() } else { '_' })
            .collect::<String>(),
        None => format!("emoji_{:x}", c as u32),
    };
    format!(":{name}:")
}

fn is_word_char(c: Option<char>) -> bool {
    c.is_some_and(char::is_alphanumeric)
}

/// Strip punctuation from one token, keeping hyphens and apostrophes that
/// sit between two alphanumeric characters.
fn strip_punctuation(token: &str) -> String {
    let stripped = PUNCT.replace_all(token, "");
    let chars: Vec<char> = stripped.chars().collect();
    let mut out = String::with_capacity(stripped.len());
    for (i, &c) in chars.iter().enumerate() {
        if matches!(c, '-' | '\'' | '’') {
            let prev = i.checked_sub(1).map(|j| chars[j]);
            let next = chars.get(i + 1).copied();
            if !(is_word_char(prev) && is_word_char(next)) {
                continue;
            }
        }
        out.push(c);
    }
    out
}

/// Normalize raw text: lowercase, drop URLs, hashtags and mentions, handle
/// emoji per config, strip punctuation, remove stopwords and collapse
/// whitespace. Idempotent.
pub fn clean_text(raw: &str, config: &CleanConfig) -> String {
    let lower = raw.to_lowercase();
    let text = URL.replace_all(&lower, " ");
    let text = HASHTAG.replace_all(&text, " ");
    let text = MENTION.replace_all(&text, " ");

    let mut spaced = String::with_capacity(text.len());
    for c in text.chars() {
        if is_emoji_joiner(c) {
            continue;
        }
        if is_emoji(c) {
            spaced.push(' ');
            if config.emoji == EmojiStyle::NamedMarker {
                spaced.push_str(&emoji_marker(c));
                spaced.push(' ');
            }
            continue;
        }
        spaced.push(c);
    }

    let mut out = String::with_capacity(spaced.len());
    for token in spaced.split_whitespace() {
        let token = if MARKER.is_match(token) {
            token.to_string()
        } else {
            strip_punctuation(token)
        };
        if token.is_empty() || config.is_stopword(&token) {
            continue;
        }
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(&token);
    }
    out
}
