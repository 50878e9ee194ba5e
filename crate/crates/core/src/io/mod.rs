//! Loaders and writers for corpora, ontologies, databases and predictions.
//!
//! The native formats are JSON Lines; see `docs/formats.md`. A MultiWOZ 2.2
//! adapter is selected with [`Format::MultiWoz22`].

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::de::DeserializeOwned;

use crate::error::{Error, Result};

mod multiwoz22;
mod native;

pub use native::{
    corpus_to_string, load_corpus, load_database, load_ontology, load_predictions, write_corpus, write_predictions,
    LoadOptions,
};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Native,
    #[serde(rename = "multiwoz22")]
    MultiWoz22,
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "native" => Ok(Format::Native),
            "multiwoz22" => Ok(Format::MultiWoz22),
            other => Err(Error::Invalid(format!("unknown format `{other}`"))),
        }
    }
}

impl fmt::Display for Format {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Format::Native => "native",
            Format::MultiWoz22 => "multiwoz22",
        })
    }
}

pub(crate) fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Parses every non-blank line of a JSON Lines file. Lines starting with
/// `#` are comments.
pub(crate) fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let text = read_to_string(path)?;
    jsonl_records(path, &text)?
        .into_iter()
        .map(|(line, value)| parse_value(path, line, value))
        .collect()
}

/// Splits a JSON Lines document into `(line_number, value)` pairs.
pub(crate) fn jsonl_records(path: &Path, text: &str) -> Result<Vec<(usize, serde_json::Value)>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let value = serde_json::from_str(trimmed).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            column: e.column(),
            message: e.to_string(),
        })?;
        out.push((i + 1, value));
    }
    Ok(out)
}

pub(crate) fn parse_value<T: DeserializeOwned>(path: &Path, line: usize, value: serde_json::Value) -> Result<T> {
    serde_json::from_value(value).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line,
        column: 1,
        message: e.to_string(),
    })
}

pub(crate) fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}
