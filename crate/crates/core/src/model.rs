//! In-memory corpus model: slot triples, belief states, dialogs, corpora,
//! ontologies, entity databases and prediction sets.
//!
//! Every structure here is validated at construction and treated as
//! immutable afterwards, so it can be shared read-only between workers.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::canonicalize::{normalize_text, NormalizationConfig};
use crate::error::{Error, Result};

/// A `(domain, slot_type)` pair, rendered as `domain.slot_type`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SlotKey {
    pub domain: String,
    pub slot_type: String,
}

impl SlotKey {
    pub fn new(domain: impl Into<String>, slot_type: impl Into<String>) -> Result<Self> {
        let domain = domain.into();
        let slot_type = slot_type.into();
        check_identifier(&domain)?;
        check_identifier(&slot_type)?;
        Ok(SlotKey { domain, slot_type })
    }
}

fn check_identifier(ident: &str) -> Result<()> {
    let ok = !ident.is_empty()
        && ident.trim() == ident
        && !ident.contains(['.', '='])
        && !ident.chars().any(|c| c.is_uppercase() || c.is_control());
    if ok {
        Ok(())
    } else {
        Err(Error::Invalid(format!("bad identifier `{ident}`")))
    }
}

impl fmt::Display for SlotKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.domain, self.slot_type)
    }
}

impl FromStr for SlotKey {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (domain, slot_type) = s
            .split_once('.')
            .ok_or_else(|| Error::Invalid(format!("slot `{s}` is not of the form domain.slot_type")))?;
        SlotKey::new(domain, slot_type)
    }
}

impl Serialize for SlotKey {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for SlotKey {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// One dialog-state fact. The value is always stored normalized.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SlotTriple {
    pub slot: SlotKey,
    pub value: String,
}

impl SlotTriple {
    pub fn new(slot: SlotKey, raw_value: &str) -> Result<Self> {
        let value = normalize_text(raw_value, &NormalizationConfig::default());
        if value.is_empty() {
            return Err(Error::Invalid(format!("empty value for slot {slot}")));
        }
        Ok(SlotTriple { slot, value })
    }

    /// Parses the `domain.slot_type=value` syntax.
    pub fn parse(s: &str) -> Result<Self> {
        let (slot, value) = s
            .split_once('=')
            .ok_or_else(|| Error::Invalid(format!("triple `{s}` is missing `=`")))?;
        SlotTriple::new(slot.parse()?, value)
    }
}

impl fmt::Display for SlotTriple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}={}", self.slot, self.value)
    }
}

/// Belief state: at most one primary value per slot. In multi-value mode
/// extra values for a slot are kept as alternatives, and scoring accepts any
/// of them.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BeliefState {
    values: BTreeMap<SlotKey, String>,
    alternatives: BTreeMap<SlotKey, Vec<String>>,
}

impl BeliefState {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a state from triples, rejecting repeated slots unless
    /// `multi_value` is set.
    pub fn from_triples(triples: impl IntoIterator<Item = SlotTriple>, multi_value: bool) -> Result<Self> {
        let mut state = BeliefState::new();
        for t in triples {
            match state.values.get(&t.slot) {
                None => {
                    state.values.insert(t.slot, t.value);
                }
                Some(existing) if *existing == t.value => {}
                Some(existing) => {
                    if !multi_value {
                        return Err(Error::Invalid(format!(
                            "slot {} has two values (`{existing}`, `{}`)",
                            t.slot, t.value
                        )));
                    }
                    let alts = state.alternatives.entry(t.slot).or_default();
                    if !alts.contains(&t.value) {
                        alts.push(t.value);
                    }
                }
            }
        }
        Ok(state)
    }

    pub fn get(&self, slot: &SlotKey) -> Option<&str> {
        self.values.get(slot).map(String::as_str)
    }

    pub fn alternatives(&self, slot: &SlotKey) -> &[String] {
        self.alternatives.get(slot).map_or(&[], Vec::as_slice)
    }

    /// True if `value` is the primary value or one of the alternatives.
    pub fn accepts(&self, slot: &SlotKey, value: &str) -> bool {
        self.get(slot) == Some(value) || self.alternatives(slot).iter().any(|a| a == value)
    }

    /// Sets the primary value, dropping alternatives for that slot.
    pub fn set(&mut self, slot: SlotKey, value: String) -> Option<String> {
        self.alternatives.remove(&slot);
        self.values.insert(slot, value)
    }

    pub fn remove(&mut self, slot: &SlotKey) -> Option<String> {
        self.alternatives.remove(slot);
        self.values.remove(slot)
    }

    pub fn contains_slot(&self, slot: &SlotKey) -> bool {
        self.values.contains_key(slot)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn slots(&self) -> impl Iterator<Item = &SlotKey> {
        self.values.keys()
    }

    /// Primary values in slot order.
    pub fn iter(&self) -> impl Iterator<Item = (&SlotKey, &str)> {
        self.values.iter().map(|(k, v)| (k, v.as_str()))
    }

    /// Primary triples followed by alternatives, in slot order.
    pub fn triples(&self) -> Vec<SlotTriple> {
        let mut out = Vec::with_capacity(self.values.len());
        for (slot, value) in &self.values {
            out.push(SlotTriple {
                slot: slot.clone(),
                value: value.clone(),
            });
            for alt in self.alternatives(slot) {
                out.push(SlotTriple {
                    slot: slot.clone(),
                    value: alt.clone(),
                });
            }
        }
        out
    }

    pub(crate) fn map_values(&mut self, mut f: impl FnMut(&SlotKey, &str) -> Option<String>) {
        for (slot, value) in self.values.iter_mut() {
            if let Some(v) = f(slot, value) {
                *value = v;
            }
        }
        for (slot, alts) in self.alternatives.iter_mut() {
            for alt in alts.iter_mut() {
                if let Some(v) = f(slot, alt) {
                    *alt = v;
                }
            }
        }
    }

    pub fn domains(&self) -> BTreeSet<&str> {
        self.values.keys().map(|k| k.domain.as_str()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DialogTurn {
    pub index: usize,
    pub user: String,
    pub system: String,
    /// Cumulative state up to and including this turn.
    pub state: BeliefState,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dialog {
    pub id: String,
    pub domains: BTreeSet<String>,
    pub turns: Vec<DialogTurn>,
}

impl Dialog {
    pub fn validate(&self) -> Result<()> {
        if self.id.is_empty() {
            return Err(Error::Invalid("dialog with empty id".into()));
        }
        let last = self.turns.len().saturating_sub(1);
        for (pos, turn) in self.turns.iter().enumerate() {
            let fail = |message: String| Error::TurnInvariant {
                dialog: self.id.clone(),
                turn: turn.index,
                message,
            };
            if turn.index != pos {
                return Err(fail(format!("expected turn index {pos}")));
            }
            if turn.system.trim().is_empty() && pos != last {
                return Err(fail("empty system response before the final turn".into()));
            }
            for domain in turn.state.domains() {
                if !self.domains.contains(domain) {
                    return Err(fail(format!("domain `{domain}` not in the dialog's domains")));
                }
            }
        }
        Ok(())
    }

    pub fn final_state(&self) -> Option<&BeliefState> {
        self.turns.last().map(|t| &t.state)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Valid,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Valid, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Valid => "valid",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "valid" | "val" | "dev" => Ok(Split::Valid),
            "test" => Ok(Split::Test),
            other => Err(Error::Invalid(format!("unknown split `{other}`"))),
        }
    }
}

/// A validated corpus. Dialogs are kept sorted by id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Corpus {
    pub split: Split,
    dialogs: Vec<Dialog>,
}

impl Corpus {
    pub fn new(split: Split, mut dialogs: Vec<Dialog>) -> Result<Self> {
        dialogs.sort_by(|a, b| a.id.cmp(&b.id));
        for pair in dialogs.windows(2) {
            if pair[0].id == pair[1].id {
                return Err(Error::DuplicateDialog(pair[0].id.clone()));
            }
        }
        for dialog in &dialogs {
            dialog.validate()?;
        }
        Ok(Corpus { split, dialogs })
    }

    pub fn empty(split: Split) -> Self {
        Corpus {
            split,
            dialogs: Vec::new(),
        }
    }

    pub fn dialogs(&self) -> &[Dialog] {
        &self.dialogs
    }

    pub fn into_dialogs(self) -> Vec<Dialog> {
        self.dialogs
    }

    pub fn len(&self) -> usize {
        self.dialogs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dialogs.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&Dialog> {
        self.dialogs
            .binary_search_by(|d| d.id.as_str().cmp(id))
            .ok()
            .map(|i| &self.dialogs[i])
    }

    pub fn turn_count(&self) -> usize {
        self.dialogs.iter().map(|d| d.turns.len()).sum()
    }

    /// Every slot appearing in any belief state.
    pub fn slots(&self) -> BTreeSet<SlotKey> {
        self.dialogs
            .iter()
            .flat_map(|d| d.turns.iter())
            .flat_map(|t| t.state.slots().cloned())
            .collect()
    }

    /// Every `(slot, value)` appearing in any belief state, alternatives included.
    pub fn vocabulary(&self) -> BTreeMap<SlotKey, BTreeSet<String>> {
        let mut vocab: BTreeMap<SlotKey, BTreeSet<String>> = BTreeMap::new();
        for turn in self.dialogs.iter().flat_map(|d| d.turns.iter()) {
            for t in turn.state.triples() {
                vocab.entry(t.slot).or_default().insert(t.value);
            }
        }
        vocab
    }
}

/// A turn where a slot held at turn `turn - 1` vanished without being
/// overwritten.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CumulativityViolation {
    pub dialog: String,
    pub turn: usize,
    pub dropped: SlotTriple,
}

pub fn cumulativity_violations(dialog: &Dialog) -> Vec<CumulativityViolation> {
    let mut out = Vec::new();
    for pair in dialog.turns.windows(2) {
        for (slot, value) in pair[0].state.iter() {
            if !pair[1].state.contains_slot(slot) {
                out.push(CumulativityViolation {
                    dialog: dialog.id.clone(),
                    turn: pair[1].index,
                    dropped: SlotTriple {
                        slot: slot.clone(),
                        value: value.to_string(),
                    },
                });
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OntologyEntry {
    pub values: BTreeSet<String>,
    pub categorical: bool,
}

pub const DEFAULT_CATEGORICAL_CAP: usize = 50;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Ontology {
    entries: BTreeMap<SlotKey, OntologyEntry>,
}

impl Ontology {
    /// Builds an ontology; values are normalized and categorical entries must
    /// have fewer than `categorical_cap` values.
    pub fn new(entries: impl IntoIterator<Item = (SlotKey, OntologyEntry)>, categorical_cap: usize) -> Result<Self> {
        let norm = NormalizationConfig::default();
        let mut out = BTreeMap::new();
        for (slot, entry) in entries {
            let values: BTreeSet<String> = entry
                .values
                .iter()
                .map(|v| normalize_text(v, &norm))
                .filter(|v| !v.is_empty())
                .collect();
            if entry.categorical && values.len() >= categorical_cap {
                return Err(Error::Invalid(format!(
                    "categorical slot {slot} has {} values (cap {categorical_cap})",
                    values.len()
                )));
            }
            if out.contains_key(&slot) {
                return Err(Error::Invalid(format!("slot {slot} declared twice")));
            }
            out.insert(
                slot,
                OntologyEntry {
                    values,
                    categorical: entry.categorical,
                },
            );
        }
        Ok(Ontology { entries: out })
    }

    pub fn entry(&self, slot: &SlotKey) -> Option<&OntologyEntry> {
        self.entries.get(slot)
    }

    pub fn contains(&self, slot: &SlotKey) -> bool {
        self.entries.contains_key(slot)
    }

    pub fn slots(&self) -> impl Iterator<Item = &SlotKey> {
        self.entries.keys()
    }

    pub fn entries(&self) -> impl Iterator<Item = (&SlotKey, &OntologyEntry)> {
        self.entries.iter()
    }

    pub fn domains(&self) -> BTreeSet<&str> {
        self.entries.keys().map(|k| k.domain.as_str()).collect()
    }

    /// Fails on the first belief-state slot the ontology does not declare.
    pub fn check_corpus(&self, corpus: &Corpus) -> Result<()> {
        match corpus.slots().into_iter().find(|s| !self.contains(s)) {
            Some(slot) => Err(Error::UnknownSlot(slot)),
            None => Ok(()),
        }
    }
}

/// A non-fatal finding reported by a loader or validator.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Diagnostic {
    pub location: String,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.location, self.message)
    }
}

pub type EntityRecord = BTreeMap<String, String>;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EntityDatabase {
    pub records: BTreeMap<String, Vec<EntityRecord>>,
}

impl EntityDatabase {
    /// Record values that do not normalize to a member of a non-empty
    /// ontology entry for the same slot.
    pub fn mismatches(&self, ontology: &Ontology) -> Vec<Diagnostic> {
        let norm = NormalizationConfig::default();
        let mut out = Vec::new();
        for (domain, records) in &self.records {
            for (i, record) in records.iter().enumerate() {
                for (slot_type, value) in record {
                    let Ok(slot) = SlotKey::new(domain.clone(), slot_type.clone()) else {
                        continue;
                    };
                    let Some(entry) = ontology.entry(&slot) else {
                        continue;
                    };
                    if entry.values.is_empty() {
                        continue;
                    }
                    if !entry.values.contains(&normalize_text(value, &norm)) {
                        out.push(Diagnostic {
                            location: format!("{domain}[{i}]"),
                            message: format!("{slot}: `{value}` is not in the ontology"),
                        });
                    }
                }
            }
        }
        out
    }

    /// Normalized values of one slot across all records of its domain.
    pub fn values(&self, slot: &SlotKey) -> BTreeSet<String> {
        let norm = NormalizationConfig::default();
        self.records
            .get(&slot.domain)
            .into_iter()
            .flatten()
            .filter_map(|r| r.get(&slot.slot_type))
            .map(|v| normalize_text(v, &norm))
            .filter(|v| !v.is_empty())
            .collect()
    }
}

/// Model outputs keyed by `(dialog_id, turn_index)`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PredictionSet {
    pub entries: BTreeMap<(String, usize), BeliefState>,
}

impl PredictionSet {
    pub fn get(&self, dialog: &str, turn: usize) -> Option<&BeliefState> {
        self.entries.get(&(dialog.to_string(), turn))
    }

    /// Checks every key against the gold corpus.
    pub fn check_against(&self, gold: &Corpus) -> Result<()> {
        for (dialog, turn) in self.entries.keys() {
            let known = gold.get(dialog).is_some_and(|d| *turn < d.turns.len());
            if !known {
                return Err(Error::UnknownTurn {
                    dialog: dialog.clone(),
                    turn: *turn,
                });
            }
        }
        Ok(())
    }
}
