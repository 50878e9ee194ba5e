//! Text normalization and slot-value canonicalization.
//!
//! Normalization never rewrites utterances in place: it is applied to
//! annotation values and to both sides of every comparison.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

use crate::error::{Error, Result};
use crate::io::read_jsonl;
use crate::model::{Ontology, SlotKey};

pub const DEFAULT_STRIP_PUNCTUATION: &str = ".,!?;:\"";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NormalizationConfig {
    pub lowercase: bool,
    /// Characters removed from the edges of whitespace-separated tokens.
    /// Interior characters are kept so times like `10:15` survive.
    pub strip_punctuation: BTreeSet<char>,
    pub collapse_whitespace: bool,
    pub strip_diacritics: bool,
    pub synonyms: SynonymTable,
}

impl Default for NormalizationConfig {
    fn default() -> Self {
        NormalizationConfig {
            lowercase: true,
            strip_punctuation: DEFAULT_STRIP_PUNCTUATION.chars().collect(),
            collapse_whitespace: true,
            strip_diacritics: false,
            synonyms: SynonymTable::default(),
        }
    }
}

/// Per-slot map from a normalized variant to its canonical value.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SynonymTable {
    table: BTreeMap<SlotKey, BTreeMap<String, String>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct SynonymRecord {
    slot: SlotKey,
    variant: String,
    canonical: String,
}

impl SynonymTable {
    /// Builds a table from `(slot, variant, canonical)` rows. Both sides are
    /// normalized; a target that is also a source is rejected so mapping is
    /// never transitive.
    pub fn new(rows: impl IntoIterator<Item = (SlotKey, String, String)>) -> Result<Self> {
        let plain = NormalizationConfig::default();
        let mut table: BTreeMap<SlotKey, BTreeMap<String, String>> = BTreeMap::new();
        for (slot, variant, canonical) in rows {
            let variant = normalize_text(&variant, &plain);
            let canonical = normalize_text(&canonical, &plain);
            if variant.is_empty() || canonical.is_empty() {
                return Err(Error::Invalid(format!("empty synonym entry for {slot}")));
            }
            if variant == canonical {
                continue;
            }
            table.entry(slot).or_default().insert(variant, canonical);
        }
        for (slot, map) in &table {
            if let Some(target) = map.values().find(|t| map.contains_key(*t)) {
                return Err(Error::SynonymChain(format!("{slot}: {target}")));
            }
        }
        Ok(SynonymTable { table })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let rows: Vec<SynonymRecord> = read_jsonl(path)?;
        Self::new(rows.into_iter().map(|r| (r.slot, r.variant, r.canonical)))
    }

    pub fn lookup(&self, slot: &SlotKey, normalized: &str) -> Option<&str> {
        self.table.get(slot)?.get(normalized).map(String::as_str)
    }

    /// `(variant, canonical)` pairs for one slot.
    pub fn variants(&self, slot: &SlotKey) -> impl Iterator<Item = (&str, &str)> {
        self.table
            .get(slot)
            .into_iter()
            .flatten()
            .map(|(v, c)| (v.as_str(), c.as_str()))
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }

    /// Every target of a categorical slot must be an ontology member.
    pub fn check_targets(&self, ontology: &Ontology) -> Result<()> {
        for (slot, map) in &self.table {
            let Some(entry) = ontology.entry(slot) else {
                return Err(Error::UnknownSlot(slot.clone()));
            };
            if !entry.categorical {
                continue;
            }
            if let Some(bad) = map.values().find(|c| !entry.values.contains(*c)) {
                return Err(Error::Invalid(format!(
                    "synonym target `{bad}` is not a value of categorical slot {slot}"
                )));
            }
        }
        Ok(())
    }
}

/// Idempotent normalization: case folding, optional diacritic removal,
/// edge punctuation stripping per token, and whitespace collapsing.
pub fn normalize_text(raw: &str, config: &NormalizationConfig) -> String {
    let mut text: String = if config.lowercase {
        raw.to_lowercase()
    } else {
        raw.to_string()
    };
    if config.strip_diacritics {
        text = text
            .nfd()
            .filter(|c| !unicode_normalization::char::is_combining_mark(*c))
            .nfc()
            .collect();
    }
    let strip = |token: &str| -> String {
        token
            .trim_matches(|c| config.strip_punctuation.contains(&c))
            .to_string()
    };
    if config.collapse_whitespace {
        let tokens: Vec<String> = text.split_whitespace().map(strip).filter(|t| !t.is_empty()).collect();
        tokens.join(" ")
    } else {
        let mut out = String::with_capacity(text.len());
        let mut token = String::new();
        for c in text.chars() {
            if c.is_whitespace() {
                out.push_str(&strip(&token));
                token.clear();
                out.push(c);
            } else {
                token.push(c);
            }
        }
        out.push_str(&strip(&token));
        out
    }
}

/// Normalizes `raw` and applies the slot's synonym table once.
pub fn normalize_value(slot: &SlotKey, raw: &str, config: &NormalizationConfig) -> String {
    let norm = normalize_text(raw, config);
    match config.synonyms.lookup(slot, &norm) {
        Some(canonical) => canonical.to_string(),
        None => norm,
    }
}

/// Exact (never fuzzy) lookup of `raw` in the ontology entry for `slot`.
/// Returns `Ok(None)` when the value is not a member.
pub fn canonical_value(
    slot: &SlotKey,
    raw: &str,
    ontology: &Ontology,
    config: &NormalizationConfig,
) -> Result<Option<String>> {
    let entry = ontology.entry(slot).ok_or_else(|| Error::UnknownSlot(slot.clone()))?;
    let value = normalize_value(slot, raw, config);
    Ok(entry.values.get(&value).cloned())
}

/// A token of a raw utterance: its normalized text and byte span.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub text: String,
    pub start: usize,
    pub end: usize,
}

/// Splits `raw` on whitespace, strips edge punctuation and case-folds each
/// token, keeping byte offsets into `raw`. Tokens that are pure punctuation
/// are dropped.
pub fn tokenize(raw: &str, config: &NormalizationConfig) -> Vec<Token> {
    let mut tokens = Vec::new();
    let mut pos = 0;
    for piece in raw.split_whitespace() {
        // split_whitespace yields subslices in order, so find from pos.
        let offset = raw[pos..].find(piece).map_or(pos, |i| pos + i);
        pos = offset + piece.len();
        let trimmed_start = piece.trim_start_matches(|c| config.strip_punctuation.contains(&c));
        let trimmed = trimmed_start.trim_end_matches(|c| config.strip_punctuation.contains(&c));
        if trimmed.is_empty() {
            continue;
        }
        let start = offset + (piece.len() - trimmed_start.len());
        let end = start + trimmed.len();
        let text = normalize_text(trimmed, config);
        if text.is_empty() {
            continue;
        }
        tokens.push(Token { text, start, end });
    }
    tokens
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::OntologyEntry;
    use proptest::prelude::*;

    fn cfg() -> NormalizationConfig {
        NormalizationConfig::default()
    }

    fn ontology() -> Ontology {
        let entry = |values: &[&str], categorical| OntologyEntry {
            values: values.iter().map(|v| v.to_string()).collect(),
            categorical,
        };
        Ontology::new(
            [
                ("attraction.name".parse().unwrap(), entry(&["all saints church"], false)),
                (
                    "hotel.pricerange".parse().unwrap(),
                    entry(&["cheap", "moderate", "expensive"], true),
                ),
                ("hotel.internet".parse().unwrap(), entry(&["yes", "no", "free"], true)),
                ("hotel.area".parse().unwrap(), entry(&["centre", "north"], true)),
            ],
            50,
        )
        .unwrap()
    }

    #[test]
    fn normalize_examples() {
        assert_eq!(normalize_text("All Saints Church.", &cfg()), "all saints church");
        assert_eq!(normalize_text("guest  house", &cfg()), "guest house");
        assert_eq!(normalize_text("  \"Hi\", there!  ", &cfg()), "hi there");
        assert_eq!(normalize_text("10:15", &cfg()), "10:15");
        assert_eq!(normalize_text(" . ", &cfg()), "");
    }

    #[test]
    fn no_collapse_keeps_spacing() {
        let c = NormalizationConfig {
            collapse_whitespace: false,
            ..cfg()
        };
        assert_eq!(normalize_text("Guest  House.", &c), "guest  house");
    }

    #[test]
    fn diacritics_are_opt_in() {
        assert_eq!(normalize_text("Café", &cfg()), "café");
        let c = NormalizationConfig {
            strip_diacritics: true,
            ..cfg()
        };
        assert_eq!(normalize_text("Café", &c), "cafe");
    }

    #[test]
    fn canonical_lookup() {
        let o = ontology();
        let c = cfg();
        assert_eq!(
            canonical_value(&"attraction.name".parse().unwrap(), "All Saints Church", &o, &c).unwrap(),
            Some("all saints church".into())
        );
        assert_eq!(
            canonical_value(&"hotel.pricerange".parse().unwrap(), "Moderate", &o, &c).unwrap(),
            Some("moderate".into())
        );
        assert_eq!(
            canonical_value(&"hotel.internet".parse().unwrap(), "maybe", &o, &c).unwrap(),
            None
        );
        assert!(canonical_value(&"bus.day".parse().unwrap(), "x", &o, &c).is_err());
    }

    #[test]
    fn synonyms_map_once() {
        let area: SlotKey = "hotel.area".parse().unwrap();
        let table = SynonymTable::new([(area.clone(), "center".into(), "centre".into())]).unwrap();
        let c = NormalizationConfig {
            synonyms: table,
            ..cfg()
        };
        let o = ontology();
        assert_eq!(canonical_value(&area, "centre", &o, &c).unwrap(), Some("centre".into()));
        assert_eq!(canonical_value(&area, "Center", &o, &c).unwrap(), Some("centre".into()));
        c.synonyms.check_targets(&o).unwrap();
    }

    #[test]
    fn synonym_chains_rejected() {
        let area: SlotKey = "hotel.area".parse().unwrap();
        let err = SynonymTable::new([
            (area.clone(), "center".into(), "centre".into()),
            (area, "centre".into(), "middle".into()),
        ])
        .unwrap_err();
        assert!(matches!(err, Error::SynonymChain(_)));
    }

    #[test]
    fn synonym_target_must_be_categorical_member() {
        let area: SlotKey = "hotel.area".parse().unwrap();
        let table = SynonymTable::new([(area, "middle".into(), "midtown".into())]).unwrap();
        assert!(table.check_targets(&ontology()).is_err());
    }

    #[test]
    fn tokenize_offsets() {
        let raw = "All Saints Church, is in the centre.";
        let toks = tokenize(raw, &cfg());
        let texts: Vec<_> = toks.iter().map(|t| t.text.as_str()).collect();
        assert_eq!(texts, ["all", "saints", "church", "is", "in", "the", "centre"]);
        assert_eq!(&raw[toks[2].start..toks[2].end], "Church");
        assert_eq!(&raw[toks[6].start..toks[6].end], "centre");
    }

    proptest! {
        #[test]
        fn normalize_is_idempotent(s in "\\PC{0,40}") {
            let once = normalize_text(&s, &cfg());
            prop_assert_eq!(normalize_text(&once, &cfg()), once.clone());
            let c = NormalizationConfig { collapse_whitespace: false, strip_diacritics: true, ..cfg() };
            let once = normalize_text(&s, &c);
            prop_assert_eq!(normalize_text(&once, &c), once);
        }

        #[test]
        fn canonical_output_is_member(s in "[a-zA-Z .]{0,20}") {
            let o = ontology();
            let slot: SlotKey = "hotel.area".parse().unwrap();
            if let Some(v) = canonical_value(&slot, &s, &o, &cfg()).unwrap() {
                prop_assert!(o.entry(&slot).unwrap().values.contains(&v));
            }
        }
    }
}
