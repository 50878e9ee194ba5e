use std::path::PathBuf;

use thiserror::Error;

use crate::model::SlotKey;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}:{column}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        column: usize,
        message: String,
    },

    #[error("{0}")]
    Invalid(String),

    #[error("duplicate dialog id `{0}`")]
    DuplicateDialog(String),

    #[error("dialog `{dialog}` turn {turn}: {message}")]
    TurnInvariant {
        dialog: String,
        turn: usize,
        message: String,
    },

    #[error("unknown slot `{0}`")]
    UnknownSlot(SlotKey),

    #[error("prediction refers to unknown turn `{dialog}` #{turn}")]
    UnknownTurn { dialog: String, turn: usize },

    #[error("synonym table: `{0}` is both a source and a target")]
    SynonymChain(String),

    #[error("rule `{rule_id}`: {message}")]
    Rule { rule_id: String, message: String },

    #[error("conflicting corrections for `{dialog}` turn {turn} slot {slot}: `{first}` vs `{second}`")]
    ConflictingCorrections {
        dialog: String,
        turn: usize,
        slot: String,
        first: String,
        second: String,
    },

    #[error("correction for `{dialog}` turn {turn}: {message}")]
    BadCorrection {
        dialog: String,
        turn: usize,
        message: String,
    },

    #[error("stratum `{stratum}` has {available} dialogs, {requested} requested")]
    StratumTooSmall {
        stratum: &'static str,
        available: usize,
        requested: usize,
    },

    #[error(
        "dialog `{dialog}` slot {slot}: replacement pool exhausted ({needed} needed, {available} unseen candidates)"
    )]
    PoolExhausted {
        dialog: String,
        slot: SlotKey,
        needed: usize,
        available: usize,
    },

    #[error("dialog `{dialog}`: overlapping originals `{first}` and `{second}` at byte {start}")]
    AmbiguousOverlap {
        dialog: String,
        first: String,
        second: String,
        start: usize,
    },

    #[error("slot universes differ: {0}")]
    SlotUniverseMismatch(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
