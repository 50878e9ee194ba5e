use std::collections::BTreeMap;
use std::fmt::Write as _;

use super::{CorrectionRecord, DetectionConfig, MentionDetector, RuleSet, Side, Status, USER_MENTION_RULE};
use crate::canonicalize::normalize_text;
use crate::error::{Error, Result};
use crate::model::{Corpus, Dialog, EntityDatabase, Ontology, SlotKey, SlotTriple};
use crate::par;

/// Which utterance sides to inspect.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SideFilter {
    User,
    System,
    Both,
}

impl SideFilter {
    fn includes(self, side: Side) -> bool {
        matches!(
            (self, side),
            (SideFilter::Both, _) | (SideFilter::User, Side::User) | (SideFilter::System, Side::System)
        )
    }
}

/// Detection engine over immutable ontology, database and rules.
#[derive(Debug, Clone)]
pub struct Checker {
    detector: MentionDetector,
    rules: RuleSet,
}

impl Checker {
    pub fn new(ontology: &Ontology, database: &EntityDatabase, rules: RuleSet, config: &DetectionConfig) -> Self {
        Checker {
            detector: MentionDetector::new(ontology, database, config),
            rules,
        }
    }

    pub fn detector(&self) -> &MentionDetector {
        &self.detector
    }

    fn config(&self) -> &DetectionConfig {
        self.detector.config()
    }

    pub fn detect_missing_user_annotations(&self, dialog: &Dialog) -> Vec<CorrectionRecord> {
        self.check_dialog(dialog, SideFilter::User)
    }

    pub fn detect_missing_system_annotations(&self, dialog: &Dialog) -> Vec<CorrectionRecord> {
        self.check_dialog(dialog, SideFilter::System)
    }

    /// Proposes missing annotations for one dialog.
    ///
    /// Turns are visited in order on a working copy; every proposal is applied
    /// to the copy immediately (with forward propagation), so later turns see
    /// earlier fixes. At each turn user-side mentions are considered before
    /// system offers from the previous turn, whose insertion point is this
    /// turn. Re-running on the corrected dialog proposes nothing.
    pub fn check_dialog(&self, dialog: &Dialog, sides: SideFilter) -> Vec<CorrectionRecord> {
        let norm = &self.config().normalization;
        let mut work = dialog.clone();
        let mut out = Vec::new();
        for t in 0..dialog.turns.len() {
            let user_norm = normalize_text(&dialog.turns[t].user, norm);
            if sides.includes(Side::User) {
                for cand in self.detector.detect_turn(dialog, t, Side::User) {
                    if !self.needs(&work, t, &cand.slot, &cand.value) {
                        continue;
                    }
                    let rule_id = if self.rules.covers(Side::User, &cand.slot) {
                        match self
                            .rules
                            .first_match(Side::User, &cand.slot, &cand.surface, &user_norm, &user_norm)
                        {
                            Some(id) => id.to_string(),
                            None => continue,
                        }
                    } else {
                        USER_MENTION_RULE.to_string()
                    };
                    out.push(self.propose(&mut work, t, cand.slot, cand.value, Side::User, rule_id));
                }
            }
            if t > 0 && sides.includes(Side::System) {
                let system_norm = normalize_text(&dialog.turns[t - 1].system, norm);
                let context = format!("{system_norm}\n{user_norm}");
                for cand in self.detector.detect_turn(dialog, t - 1, Side::System) {
                    if self.config().user_only_slot_types.contains(&cand.slot.slot_type) {
                        continue;
                    }
                    if !self.needs(&work, t, &cand.slot, &cand.value) {
                        continue;
                    }
                    let Some(rule_id) =
                        self.rules
                            .first_match(Side::System, &cand.slot, &cand.surface, &context, &user_norm)
                    else {
                        continue;
                    };
                    let rule_id = rule_id.to_string();
                    out.push(self.propose(&mut work, t, cand.slot, cand.value, Side::System, rule_id));
                }
            }
        }
        out
    }

    fn needs(&self, work: &Dialog, turn: usize, slot: &SlotKey, value: &str) -> bool {
        let state = &work.turns[turn].state;
        if state.accepts(slot, value) {
            return false;
        }
        !state.contains_slot(slot) || self.config().allow_overwrite
    }

    fn propose(
        &self,
        work: &mut Dialog,
        turn: usize,
        slot: SlotKey,
        value: String,
        side: Side,
        rule_id: String,
    ) -> CorrectionRecord {
        insert_and_propagate(work, turn, &slot, &value);
        CorrectionRecord {
            dialog_id: work.id.clone(),
            turn,
            added: SlotTriple { slot, value },
            side,
            rule_id,
            status: Status::Proposed,
        }
    }
}

/// Sets `slot=value` at `turn` and carries it forward until a turn holds a
/// value other than the new one or the one it replaced.
fn insert_and_propagate(dialog: &mut Dialog, turn: usize, slot: &SlotKey, value: &str) {
    let replaced = dialog.turns[turn].state.get(slot).map(str::to_string);
    dialog.turns[turn].state.set(slot.clone(), value.to_string());
    for t in dialog.turns.iter_mut().skip(turn + 1) {
        let carry = match t.state.get(slot) {
            None => true,
            Some(v) => v == value || Some(v) == replaced.as_deref(),
        };
        if !carry {
            break;
        }
        t.state.set(slot.clone(), value.to_string());
    }
}

/// Runs detection over every dialog of the corpus in parallel. Output is in
/// dialog order, then turn order.
pub fn check_corpus(checker: &Checker, corpus: &Corpus, sides: SideFilter) -> Vec<CorrectionRecord> {
    par::map(corpus.dialogs(), |d| checker.check_dialog(d, sides))
        .into_iter()
        .flatten()
        .collect()
}

/// Applies records to a copy of the corpus. Returns the corrected corpus and
/// the records marked applied, sorted by dialog, turn and slot.
pub fn apply_corrections(corpus: &Corpus, records: &[CorrectionRecord]) -> Result<(Corpus, Vec<CorrectionRecord>)> {
    let mut by_dialog: BTreeMap<&str, BTreeMap<(usize, &SlotKey), &CorrectionRecord>> = BTreeMap::new();
    for rec in records {
        let slot_map = by_dialog.entry(rec.dialog_id.as_str()).or_default();
        match slot_map.get(&(rec.turn, &rec.added.slot)) {
            Some(prev) if prev.added.value != rec.added.value => {
                return Err(Error::ConflictingCorrections {
                    dialog: rec.dialog_id.clone(),
                    turn: rec.turn,
                    slot: rec.added.slot.to_string(),
                    first: prev.added.value.clone(),
                    second: rec.added.value.clone(),
                });
            }
            Some(_) => {}
            None => {
                slot_map.insert((rec.turn, &rec.added.slot), rec);
            }
        }
    }
    for (id, recs) in &by_dialog {
        let dialog = corpus.get(id).ok_or_else(|| Error::BadCorrection {
            dialog: id.to_string(),
            turn: 0,
            message: "unknown dialog".into(),
        })?;
        for ((turn, slot), rec) in recs {
            let Some(t) = dialog.turns.get(*turn) else {
                return Err(Error::BadCorrection {
                    dialog: id.to_string(),
                    turn: *turn,
                    message: "unknown turn".into(),
                });
            };
            if t.state.accepts(slot, &rec.added.value) {
                return Err(Error::BadCorrection {
                    dialog: id.to_string(),
                    turn: *turn,
                    message: format!("{} is already annotated", rec.added),
                });
            }
        }
    }

    let dialogs = par::map(corpus.dialogs(), |dialog| {
        let mut dialog = dialog.clone();
        let mut applied = Vec::new();
        if let Some(recs) = by_dialog.get(dialog.id.as_str()) {
            for rec in recs.values() {
                insert_and_propagate(&mut dialog, rec.turn, &rec.added.slot, &rec.added.value);
                applied.push(CorrectionRecord {
                    status: Status::Applied,
                    ..(*rec).clone()
                });
            }
        }
        (dialog, applied)
    });
    let mut applied = Vec::new();
    let mut fixed = Vec::with_capacity(dialogs.len());
    for (d, a) in dialogs {
        fixed.push(d);
        applied.extend(a);
    }
    Ok((Corpus::new(corpus.split, fixed)?, applied))
}

const RECORD_HEADER: &str = "dialog_id\tturn\tslot\tvalue\tside\trule_id\tstatus";

/// Tab-separated record log with a header row.
pub fn records_to_tsv(records: &[CorrectionRecord]) -> String {
    let mut out = String::from(RECORD_HEADER);
    out.push('\n');
    for r in records {
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}",
            r.dialog_id,
            r.turn,
            r.added.slot,
            r.added.value,
            r.side,
            r.rule_id,
            r.status.as_str()
        );
    }
    out
}

pub fn parse_records(text: &str) -> Result<Vec<CorrectionRecord>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() || (i == 0 && line == RECORD_HEADER) {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        let bad = |message: String| Error::Invalid(format!("record line {}: {message}", i + 1));
        if cols.len() != 7 {
            return Err(bad(format!("expected 7 columns, found {}", cols.len())));
        }
        out.push(CorrectionRecord {
            dialog_id: cols[0].to_string(),
            turn: cols[1].parse().map_err(|_| bad(format!("bad turn `{}`", cols[1])))?,
            added: SlotTriple::new(cols[2].parse()?, cols[3])?,
            side: cols[4].parse()?,
            rule_id: cols[5].to_string(),
            status: cols[6].parse()?,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::consistency::default_rules;
    use crate::model::{BeliefState, DialogTurn, OntologyEntry, Split};

    fn ontology() -> Ontology {
        let entry = |values: &[&str], categorical| OntologyEntry {
            values: values.iter().map(|v| v.to_string()).collect(),
            categorical,
        };
        Ontology::new(
            [
                (
                    "hotel.pricerange".parse().unwrap(),
                    entry(&["cheap", "moderate", "expensive"], true),
                ),
                (
                    "hotel.area".parse().unwrap(),
                    entry(&["north", "south", "centre"], true),
                ),
                ("hotel.name".parse().unwrap(), entry(&["acorn guest house"], false)),
            ],
            50,
        )
        .unwrap()
    }

    fn dialog(turns: &[(&str, &str, &[&str])]) -> Dialog {
        Dialog {
            id: "MUL0690.json".into(),
            domains: ["hotel".to_string()].into(),
            turns: turns
                .iter()
                .enumerate()
                .map(|(i, (user, system, state))| DialogTurn {
                    index: i,
                    user: user.to_string(),
                    system: system.to_string(),
                    state: BeliefState::from_triples(state.iter().map(|t| SlotTriple::parse(t).unwrap()), false)
                        .unwrap(),
                })
                .collect(),
        }
    }

    fn checker(config: &DetectionConfig) -> Checker {
        Checker::new(&ontology(), &EntityDatabase::default(), default_rules(), config)
    }

    #[test]
    fn moderate_hotel_user_proposal() {
        let d = dialog(&[
            ("i need a place to stay", "what area?", &[]),
            ("a moderate hotel with free wifi and parking", "ok", &[]),
        ]);
        let recs = checker(&DetectionConfig::default()).detect_missing_user_annotations(&d);
        assert_eq!(recs.len(), 1);
        assert_eq!(recs[0].turn, 1);
        assert_eq!(recs[0].added.to_string(), "hotel.pricerange=moderate");
        assert_eq!(recs[0].side, Side::User);

        let d = dialog(&[
            ("i need a place to stay", "what area?", &[]),
            (
                "a moderate hotel with free wifi and parking",
                "ok",
                &["hotel.pricerange=moderate"],
            ),
        ]);
        assert!(checker(&DetectionConfig::default())
            .detect_missing_user_annotations(&d)
            .is_empty());
    }

    #[test]
    fn overwrite_is_opt_in() {
        let d = dialog(&[("something cheap", "", &["hotel.pricerange=expensive"])]);
        assert!(checker(&DetectionConfig::default())
            .detect_missing_user_annotations(&d)
            .is_empty());
        let config = DetectionConfig {
            allow_overwrite: true,
            ..DetectionConfig::default()
        };
        let recs = checker(&config).detect_missing_user_annotations(&d);
        assert_eq!(recs.len(), 1);
        assert_eq!(recs[0].added.value, "cheap");
    }

    #[test]
    fn rejection_cue_blocks_system_proposal() {
        let d = dialog(&[
            ("a hotel please", "acorn guest house is in the north", &[]),
            ("no, i want something in the west", "", &[]),
        ]);
        assert!(checker(&DetectionConfig::default())
            .detect_missing_system_annotations(&d)
            .is_empty());
        let d = dialog(&[
            ("a hotel please", "acorn guest house is nice", &[]),
            ("great, what is the postcode?", "", &[]),
        ]);
        let recs = checker(&DetectionConfig::default()).detect_missing_system_annotations(&d);
        assert_eq!(recs.len(), 1);
        assert_eq!(recs[0].turn, 1);
        assert_eq!(recs[0].side, Side::System);
        assert_eq!(recs[0].rule_id, "offer-acknowledged");
    }

    #[test]
    fn propagation_and_overwrite_boundary() {
        let d = dialog(&[
            ("hi", "a", &[]),
            ("cheap please", "b", &[]),
            ("ok", "c", &[]),
            ("ok", "", &[]),
        ]);
        let corpus = Corpus::new(Split::Test, vec![d.clone()]).unwrap();
        let rec = CorrectionRecord {
            dialog_id: d.id.clone(),
            turn: 1,
            added: SlotTriple::parse("hotel.pricerange=cheap").unwrap(),
            side: Side::User,
            rule_id: "r".into(),
            status: Status::Proposed,
        };
        let (fixed, applied) = apply_corrections(&corpus, std::slice::from_ref(&rec)).unwrap();
        assert_eq!(applied[0].status, Status::Applied);
        let slot: SlotKey = "hotel.pricerange".parse().unwrap();
        let values: Vec<_> = fixed.dialogs()[0].turns.iter().map(|t| t.state.get(&slot)).collect();
        assert_eq!(values, [None, Some("cheap"), Some("cheap"), Some("cheap")]);

        let d = dialog(&[
            ("hi", "a", &[]),
            ("cheap please", "b", &[]),
            ("ok", "c", &[]),
            ("ok", "", &["hotel.pricerange=expensive"]),
        ]);
        let corpus = Corpus::new(Split::Test, vec![d]).unwrap();
        let (fixed, _) = apply_corrections(&corpus, &[rec]).unwrap();
        let values: Vec<_> = fixed.dialogs()[0].turns.iter().map(|t| t.state.get(&slot)).collect();
        assert_eq!(values, [None, Some("cheap"), Some("cheap"), Some("expensive")]);
    }

    #[test]
    fn conflicting_records_error() {
        let d = dialog(&[("hi", "", &[])]);
        let corpus = Corpus::new(Split::Test, vec![d]).unwrap();
        let rec = |v: &str| CorrectionRecord {
            dialog_id: "MUL0690.json".into(),
            turn: 0,
            added: SlotTriple::new("hotel.area".parse().unwrap(), v).unwrap(),
            side: Side::User,
            rule_id: "r".into(),
            status: Status::Proposed,
        };
        let err = apply_corrections(&corpus, &[rec("north"), rec("south")]).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("north") && msg.contains("south"), "{msg}");
        assert!(apply_corrections(&corpus, &[rec("north"), rec("north")]).is_ok());
    }

    #[test]
    fn records_tsv_round_trip() {
        let recs = vec![CorrectionRecord {
            dialog_id: "a.json".into(),
            turn: 3,
            added: SlotTriple::parse("attraction.name=all saints church").unwrap(),
            side: Side::System,
            rule_id: "offer-acknowledged".into(),
            status: Status::Applied,
        }];
        assert_eq!(parse_records(&records_to_tsv(&recs)).unwrap(), recs);
        assert!(parse_records("x\ty").is_err());
    }
}
