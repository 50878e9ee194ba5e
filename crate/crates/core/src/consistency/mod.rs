//! Cross-dialog annotation consistency: mention detection, rule-gated
//! proposals for missing annotations, application with forward propagation,
//! correction statistics and verification worksheets.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::canonicalize::NormalizationConfig;
use crate::error::{Error, Result};
use crate::model::{SlotKey, SlotTriple};

mod correct;
mod mentions;
mod rules;
mod stats;
mod verify;

pub use correct::{apply_corrections, check_corpus, parse_records, records_to_tsv, Checker, SideFilter};
pub use mentions::MentionDetector;
pub use rules::{default_rules, load_rules, parse_rules, CorrectionRule, RuleSet, SlotPattern};
pub use stats::{correction_stats, format_count, CorrectionStats, SourceCounts, SplitStats};
pub use verify::{
    parse_worksheet, sample_verification, verification_metrics, Label, Stratum, VerificationCounts,
    VerificationMetrics, Worksheet, WorksheetRow,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    User,
    System,
}

impl Side {
    pub fn as_str(self) -> &'static str {
        match self {
            Side::User => "user",
            Side::System => "system",
        }
    }
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Side {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "user" => Ok(Side::User),
            "system" => Ok(Side::System),
            other => Err(Error::Invalid(format!("unknown side `{other}`"))),
        }
    }
}

/// A detected slot-value mention. `span` holds byte offsets into the
/// utterance of `side` at `turn`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MentionCandidate {
    pub dialog_id: String,
    pub turn: usize,
    pub side: Side,
    pub slot: SlotKey,
    pub value: String,
    /// Normalized surface text that matched (a value or one of its variants).
    pub surface: String,
    pub span: (usize, usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Proposed,
    Applied,
    Rejected,
}

impl Status {
    pub fn as_str(self) -> &'static str {
        match self {
            Status::Proposed => "proposed",
            Status::Applied => "applied",
            Status::Rejected => "rejected",
        }
    }
}

impl FromStr for Status {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "proposed" => Ok(Status::Proposed),
            "applied" => Ok(Status::Applied),
            "rejected" => Ok(Status::Rejected),
            other => Err(Error::Invalid(format!("unknown status `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CorrectionRecord {
    pub dialog_id: String,
    pub turn: usize,
    pub added: SlotTriple,
    pub side: Side,
    pub rule_id: String,
    pub status: Status,
}

/// Rule id used for user-side proposals when no user rule covers the slot.
pub const USER_MENTION_RULE: &str = "user-mention";

#[derive(Debug, Clone)]
pub struct DetectionConfig {
    pub normalization: NormalizationConfig,
    /// Slot types in decreasing priority for overlapping mentions of equal
    /// length. Unlisted slot types rank last.
    pub slot_priority: Vec<String>,
    /// Normalized surfaces never reported as mentions.
    pub ignore_surfaces: BTreeSet<String>,
    /// Slot types only the user can fill; excluded from system-side proposals.
    pub user_only_slot_types: BTreeSet<String>,
    pub skip_slots: BTreeSet<SlotKey>,
    /// Propose replacing an existing different value.
    pub allow_overwrite: bool,
}

impl Default for DetectionConfig {
    fn default() -> Self {
        let set = |items: &[&str]| items.iter().map(|s| s.to_string()).collect();
        DetectionConfig {
            normalization: NormalizationConfig::default(),
            slot_priority: [
                "name",
                "type",
                "food",
                "department",
                "destination",
                "departure",
                "area",
                "pricerange",
                "stars",
                "internet",
                "parking",
            ]
            .map(String::from)
            .to_vec(),
            ignore_surfaces: set(&["yes", "no", "none", "dontcare", "dont care", "not mentioned", "free"]),
            user_only_slot_types: set(&[
                "day",
                "people",
                "stay",
                "time",
                "leaveat",
                "arriveby",
                "bookday",
                "bookpeople",
                "bookstay",
                "booktime",
            ]),
            skip_slots: BTreeSet::new(),
            allow_overwrite: false,
        }
    }
}
