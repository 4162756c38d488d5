use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::Scalar;

/// Binary sentiment class. The class index order is fixed: Negative = 0,
/// Positive = 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sentiment {
    Negative,
    Positive,
}

impl Sentiment {
    pub const ALL: [Sentiment; 2] = [Sentiment::Negative, Sentiment::Positive];

    pub fn index(self) -> usize {
        match self {
            Sentiment::Negative => 0,
            Sentiment::Positive => 1,
        }
    }

    pub fn from_index(index: usize) -> Option<Self> {
        match index {
            0 => Some(Sentiment::Negative),
            1 => Some(Sentiment::Positive),
            _ => None,
        }
    }

    pub fn other(self) -> Self {
        match self {
            Sentiment::Negative => Sentiment::Positive,
            Sentiment::Positive => Sentiment::Negative,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Sentiment::Negative => "negative",
            Sentiment::Positive => "positive",
        }
    }
}

impl fmt::Display for Sentiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Sentiment {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "negative" => Ok(Sentiment::Negative),
            "positive" => Ok(Sentiment::Positive),
            other => Err(format!("unknown sentiment label {other:?}")),
        }
    }
}

/// One-hot target vector: Negative → `[1, 0]`, Positive → `[0, 1]`.
pub fn one_hot<T: Scalar>(label: Sentiment) -> [T; 2] {
    let mut v = [T::zero(); 2];
    v[label.index()] = T::one();
    v
}

/// Class with the larger probability. Ties resolve to Negative.
pub fn argmax<T: Scalar>(probs: &[T; 2]) -> Sentiment {
    if probs[1] > probs[0] {
        Sentiment::Positive
    } else {
        Sentiment::Negative
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_hot_layout() {
        assert_eq!(one_hot::<f64>(Sentiment::Negative), [1.0, 0.0]);
        assert_eq!(one_hot::<f64>(Sentiment::Positive), [0.0, 1.0]);
    }

    #[test]
    fn argmax_inverts_one_hot() {
        for label in Sentiment::ALL {
            assert_eq!(argmax(&one_hot::<f32>(label)), label);
        }
        assert_eq!(argmax(&[0.3f64, 0.7]), Sentiment::Positive);
    }

    #[test]
    fn parses_labels() {
        assert_eq!("Positive".parse::<Sentiment>().unwrap(), Sentiment::Positive);
        assert_eq!(" negative ".parse::<Sentiment>().unwrap(), Sentiment::Negative);
        assert!("neutral".parse::<Sentiment>().is_err());
    }
}
