use std::collections::{BTreeMap, BTreeSet, HashMap};

use super::{DetectionConfig, MentionCandidate, Side};
use crate::canonicalize::{normalize_text, tokenize, Token};
use crate::model::{Dialog, EntityDatabase, Ontology, SlotKey};

#[derive(Debug, Clone)]
struct LexEntry {
    tokens: Vec<String>,
    slot: SlotKey,
    value: String,
}

/// Finds ontology and database values in utterances.
///
/// The value set of each slot is the ontology entry extended with the
/// database values for that slot, plus synonym variants mapping onto those
/// values. Matching is token-aligned and case-insensitive.
#[derive(Debug, Clone)]
pub struct MentionDetector {
    by_first_token: HashMap<String, Vec<LexEntry>>,
    priority: HashMap<String, usize>,
    config: DetectionConfig,
    values: BTreeMap<SlotKey, BTreeSet<String>>,
}

struct Match<'a> {
    start: usize,
    len: usize,
    entry: &'a LexEntry,
}

impl MentionDetector {
    pub fn new(ontology: &Ontology, database: &EntityDatabase, config: &DetectionConfig) -> Self {
        let norm = &config.normalization;
        let mut values: BTreeMap<SlotKey, BTreeSet<String>> = BTreeMap::new();
        for (slot, entry) in ontology.entries() {
            if config.skip_slots.contains(slot) {
                continue;
            }
            let mut set = entry.values.clone();
            set.extend(database.values(slot));
            values.insert(slot.clone(), set);
        }

        let mut by_first_token: HashMap<String, Vec<LexEntry>> = HashMap::new();
        let mut push = |surface: &str, slot: &SlotKey, value: &str| {
            let surface = normalize_text(surface, norm);
            if surface.is_empty() || config.ignore_surfaces.contains(&surface) {
                return;
            }
            let tokens: Vec<String> = tokenize(&surface, norm).into_iter().map(|t| t.text).collect();
            if tokens.is_empty() {
                return;
            }
            let bucket = by_first_token.entry(tokens[0].clone()).or_default();
            let dup = bucket
                .iter()
                .any(|e| e.tokens == tokens && e.slot == *slot && e.value == value);
            if !dup {
                bucket.push(LexEntry {
                    tokens,
                    slot: slot.clone(),
                    value: value.to_string(),
                });
            }
        };
        for (slot, set) in &values {
            for value in set {
                push(value, slot, value);
            }
            for (variant, canonical) in norm.synonyms.variants(slot) {
                if set.contains(canonical) {
                    push(variant, slot, canonical);
                }
            }
        }

        let priority = config
            .slot_priority
            .iter()
            .enumerate()
            .map(|(i, s)| (s.clone(), i))
            .collect();
        MentionDetector {
            by_first_token,
            priority,
            config: config.clone(),
            values,
        }
    }

    pub fn config(&self) -> &DetectionConfig {
        &self.config
    }

    /// True if `value` is a known value of `slot` (ontology or database).
    pub fn is_known(&self, slot: &SlotKey, value: &str) -> bool {
        self.values.get(slot).is_some_and(|s| s.contains(value))
    }

    fn priority(&self, slot: &SlotKey) -> usize {
        self.priority
            .get(&slot.slot_type)
            .copied()
            .unwrap_or(self.priority.len())
    }

    /// Maximal non-overlapping mentions in `text` for slots of `domains`.
    /// Overlaps resolve by longest span, then slot priority, then leftmost.
    pub fn find(&self, text: &str, domains: &BTreeSet<String>) -> Vec<(SlotKey, String, String, (usize, usize))> {
        let tokens = tokenize(text, &self.config.normalization);
        let mut matches = Vec::new();
        for (i, tok) in tokens.iter().enumerate() {
            let Some(bucket) = self.by_first_token.get(&tok.text) else {
                continue;
            };
            for entry in bucket {
                if !domains.contains(&entry.slot.domain) {
                    continue;
                }
                if tokens_match(&tokens[i..], &entry.tokens) {
                    matches.push(Match {
                        start: i,
                        len: entry.tokens.len(),
                        entry,
                    });
                }
            }
        }
        matches.sort_by(|a, b| {
            b.len
                .cmp(&a.len)
                .then_with(|| self.priority(&a.entry.slot).cmp(&self.priority(&b.entry.slot)))
                .then_with(|| a.start.cmp(&b.start))
                .then_with(|| a.entry.slot.cmp(&b.entry.slot))
                .then_with(|| a.entry.value.cmp(&b.entry.value))
        });
        let mut taken = vec![false; tokens.len()];
        let mut chosen = Vec::new();
        for m in matches {
            let range = m.start..m.start + m.len;
            if taken[range.clone()].iter().any(|t| *t) {
                continue;
            }
            taken[range].iter_mut().for_each(|t| *t = true);
            chosen.push(m);
        }
        chosen.sort_by_key(|m| m.start);
        chosen
            .into_iter()
            .map(|m| {
                let span = (tokens[m.start].start, tokens[m.start + m.len - 1].end);
                (
                    m.entry.slot.clone(),
                    m.entry.value.clone(),
                    m.entry.tokens.join(" "),
                    span,
                )
            })
            .collect()
    }

    /// Mentions in one utterance of one turn.
    pub fn detect_turn(&self, dialog: &Dialog, turn: usize, side: Side) -> Vec<MentionCandidate> {
        let t = &dialog.turns[turn];
        let text = match side {
            Side::User => &t.user,
            Side::System => &t.system,
        };
        self.find(text, &dialog.domains)
            .into_iter()
            .map(|(slot, value, surface, span)| MentionCandidate {
                dialog_id: dialog.id.clone(),
                turn,
                side,
                slot,
                value,
                surface,
                span,
            })
            .collect()
    }

    /// Every mention in the dialog, by turn, user side before system side.
    pub fn detect(&self, dialog: &Dialog) -> Vec<MentionCandidate> {
        let mut out = Vec::new();
        for turn in 0..dialog.turns.len() {
            out.extend(self.detect_turn(dialog, turn, Side::User));
            out.extend(self.detect_turn(dialog, turn, Side::System));
        }
        out
    }
}

fn tokens_match(tokens: &[Token], pattern: &[String]) -> bool {
    tokens.len() >= pattern.len() && tokens.iter().zip(pattern).all(|(t, p)| t.text == *p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::canonicalize::SynonymTable;
    use crate::model::{BeliefState, DialogTurn, OntologyEntry};

    fn ontology() -> Ontology {
        let entry = |values: &[&str]| OntologyEntry {
            values: values.iter().map(|v| v.to_string()).collect(),
            categorical: false,
        };
        Ontology::new(
            [
                (
                    "attraction.name".parse().unwrap(),
                    entry(&["all saints church", "saints"]),
                ),
                ("attraction.area".parse().unwrap(), entry(&["centre", "west"])),
                ("attraction.type".parse().unwrap(), entry(&["architecture"])),
                ("hotel.area".parse().unwrap(), entry(&["centre", "west"])),
                ("hotel.internet".parse().unwrap(), entry(&["yes", "no"])),
            ],
            50,
        )
        .unwrap()
    }

    fn dialog(domains: &[&str], user: &str, system: &str) -> Dialog {
        Dialog {
            id: "d".into(),
            domains: domains.iter().map(|d| d.to_string()).collect(),
            turns: vec![DialogTurn {
                index: 0,
                user: user.into(),
                system: system.into(),
                state: BeliefState::new(),
            }],
        }
    }

    #[test]
    fn offered_name_is_a_system_mention() {
        let det = MentionDetector::new(&ontology(), &EntityDatabase::default(), &DetectionConfig::default());
        let d = dialog(
            &["attraction"],
            "i want an architectural attraction in the centre",
            "All Saints Church is an architectural attraction in the centre.",
        );
        let found = det.detect_turn(&d, 0, Side::System);
        let pairs: Vec<_> = found.iter().map(|m| (m.slot.to_string(), m.value.clone())).collect();
        assert_eq!(
            pairs,
            [
                ("attraction.name".to_string(), "all saints church".to_string()),
                ("attraction.area".to_string(), "centre".to_string())
            ]
        );
        let m = &found[0];
        assert_eq!(&d.turns[0].system[m.span.0..m.span.1], "All Saints Church");
    }

    #[test]
    fn no_values_no_mentions() {
        let det = MentionDetector::new(&ontology(), &EntityDatabase::default(), &DetectionConfig::default());
        let d = dialog(&["attraction", "hotel"], "hello there", "how can i help");
        assert!(det.detect(&d).is_empty());
    }

    #[test]
    fn inactive_domains_filtered() {
        let det = MentionDetector::new(&ontology(), &EntityDatabase::default(), &DetectionConfig::default());
        let d = dialog(&["hotel"], "a hotel in the centre", "ok");
        let found = det.detect_turn(&d, 0, Side::User);
        assert_eq!(found.len(), 1);
        assert_eq!(found[0].slot.to_string(), "hotel.area");
    }

    #[test]
    fn priority_breaks_equal_length_ties() {
        let config = DetectionConfig {
            slot_priority: vec!["area".into()],
            ..DetectionConfig::default()
        };
        let det = MentionDetector::new(&ontology(), &EntityDatabase::default(), &config);
        let d = dialog(&["attraction", "hotel"], "the centre", "ok");
        let found = det.detect_turn(&d, 0, Side::User);
        assert_eq!(found.len(), 1);
        // same slot type on both domains: falls through to slot order
        assert_eq!(found[0].slot.to_string(), "attraction.area");
    }

    #[test]
    fn ignored_surfaces_and_synonyms() {
        let mut config = DetectionConfig::default();
        config.normalization.synonyms = SynonymTable::new([(
            "hotel.internet".parse().unwrap(),
            "free wifi".to_string(),
            "yes".to_string(),
        )])
        .unwrap();
        let det = MentionDetector::new(&ontology(), &EntityDatabase::default(), &config);
        let d = dialog(&["hotel"], "yes, with free wifi please", "ok");
        let found = det.detect_turn(&d, 0, Side::User);
        assert_eq!(found.len(), 1);
        assert_eq!(found[0].value, "yes");
        assert_eq!(found[0].surface, "free wifi");
    }

    #[test]
    fn database_values_extend_ontology() {
        let mut db = EntityDatabase::default();
        db.records.insert(
            "attraction".into(),
            vec![[("name".to_string(), "Kettle's Yard".to_string())].into()],
        );
        let det = MentionDetector::new(&ontology(), &db, &DetectionConfig::default());
        let d = dialog(&["attraction"], "tell me about kettle's yard", "ok");
        let found = det.detect_turn(&d, 0, Side::User);
        assert_eq!(found[0].value, "kettle's yard");
        assert!(det.is_known(&"attraction.name".parse().unwrap(), "kettle's yard"));
    }
}
