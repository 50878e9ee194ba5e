use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::canonicalize::{normalize_text, NormalizationConfig};
use crate::error::Error;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FuzzyMode {
    /// Normalized Levenshtein over the whole strings.
    Full,
    /// Best full-mode score of the shorter string against every equal-length
    /// window of the longer one.
    #[default]
    Partial,
}

impl FuzzyMode {
    pub fn as_str(self) -> &'static str {
        match self {
            FuzzyMode::Full => "full",
            FuzzyMode::Partial => "partial",
        }
    }
}

impl fmt::Display for FuzzyMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FuzzyMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "full" => Ok(FuzzyMode::Full),
            "partial" => Ok(FuzzyMode::Partial),
            _ => Err(Error::Invalid(format!(
                "unknown fuzzy mode `{s}` (expected full or partial)"
            ))),
        }
    }
}

fn full_chars(a: &[char], b: &[char]) -> f64 {
    let longest = a.len().max(b.len());
    if longest == 0 {
        return 1.0;
    }
    let dist = strsim::generic_levenshtein(&a.to_vec(), &b.to_vec());
    1.0 - dist as f64 / longest as f64
}

/// Similarity of two already-normalized strings.
pub fn similarity_normalized(a: &str, b: &str, mode: FuzzyMode) -> f64 {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    match mode {
        FuzzyMode::Full => full_chars(&a, &b),
        FuzzyMode::Partial => {
            let (short, long) = if a.len() <= b.len() { (&a, &b) } else { (&b, &a) };
            if short.is_empty() {
                return if long.is_empty() { 1.0 } else { 0.0 };
            }
            long.windows(short.len())
                .map(|w| full_chars(short, w))
                .fold(0.0, f64::max)
        }
    }
}

/// Similarity in `[0, 1]` after default normalization of both sides.
pub fn similarity(a: &str, b: &str, mode: FuzzyMode) -> f64 {
    let cfg = NormalizationConfig::default();
    similarity_normalized(&normalize_text(a, &cfg), &normalize_text(b, &cfg), mode)
}
