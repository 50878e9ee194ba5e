use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::similarity::{similarity_normalized, FuzzyMode};
use crate::error::{Error, Result};
use crate::model::{BeliefState, Corpus, PredictionSet, SlotKey};
use crate::par;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SlotOutcome {
    Correct,
    WrongValue,
    Missing,
    Spurious,
}

impl SlotOutcome {
    pub fn as_str(self) -> &'static str {
        match self {
            SlotOutcome::Correct => "correct",
            SlotOutcome::WrongValue => "wrong-value",
            SlotOutcome::Missing => "missing",
            SlotOutcome::Spurious => "spurious",
        }
    }

    pub fn is_error(self) -> bool {
        self != SlotOutcome::Correct
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TurnScore {
    pub dialog_id: String,
    pub turn_index: usize,
    pub exact_joint: bool,
    pub fuzzy_joint: bool,
    /// Every slot present in gold or prediction.
    pub outcomes: BTreeMap<SlotKey, SlotOutcome>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub threshold: f64,
    pub mode: FuzzyMode,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            threshold: 0.9,
            mode: FuzzyMode::Partial,
        }
    }
}

impl EvalConfig {
    pub fn new(threshold: f64, mode: FuzzyMode) -> Result<Self> {
        if !(threshold > 0.0 && threshold <= 1.0) {
            return Err(Error::Invalid(format!("fuzzy threshold {threshold} is outside (0, 1]")));
        }
        Ok(EvalConfig { threshold, mode })
    }
}

/// Scores one turn. Gold alternatives count as correct for both the exact
/// and the fuzzy comparison.
pub fn score_turn(
    gold: &BeliefState,
    pred: &BeliefState,
    config: &EvalConfig,
) -> (bool, bool, BTreeMap<SlotKey, SlotOutcome>) {
    let mut outcomes = BTreeMap::new();
    let mut fuzzy = true;
    let slots: BTreeSet<&SlotKey> = gold.slots().chain(pred.slots()).collect();
    for slot in slots {
        let outcome = match (gold.get(slot), pred.get(slot)) {
            (Some(_), Some(p)) if gold.accepts(slot, p) => SlotOutcome::Correct,
            (Some(g), Some(p)) => {
                let close = std::iter::once(g)
                    .chain(gold.alternatives(slot).iter().map(String::as_str))
                    .any(|g| similarity_normalized(g, p, config.mode) >= config.threshold);
                fuzzy &= close;
                SlotOutcome::WrongValue
            }
            (Some(_), None) => SlotOutcome::Missing,
            (None, Some(_)) => SlotOutcome::Spurious,
            (None, None) => unreachable!("slot drawn from one of the states"),
        };
        if matches!(outcome, SlotOutcome::Missing | SlotOutcome::Spurious) {
            fuzzy = false;
        }
        outcomes.insert(slot.clone(), outcome);
    }
    let exact = outcomes.values().all(|o| *o == SlotOutcome::Correct);
    (exact, fuzzy, outcomes)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlotErrors {
    pub wrong_value: u64,
    pub missing: u64,
    pub spurious: u64,
    /// Turns where the slot appears in gold or prediction.
    pub in_scope: u64,
}

impl SlotErrors {
    pub fn total(&self) -> u64 {
        self.wrong_value + self.missing + self.spurious
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub jga: f64,
    pub fuzzy_jga: f64,
    pub slot_accuracy: f64,
    pub turn_total: u64,
    pub fuzzy_threshold: f64,
    pub fuzzy_mode: FuzzyMode,
    /// Gold turns with no prediction entry, scored as empty states.
    pub missing_predictions: u64,
    pub slots: Vec<SlotKey>,
    pub error_turn_counts: BTreeMap<SlotKey, u64>,
    pub error_turn_fractions: BTreeMap<SlotKey, f64>,
    pub slot_errors: BTreeMap<SlotKey, SlotErrors>,
}

#[derive(Default)]
struct Tally {
    turns: u64,
    exact: u64,
    fuzzy: u64,
    missing_predictions: u64,
    errors: BTreeMap<SlotKey, SlotErrors>,
}

impl Tally {
    fn merge(mut self, other: Tally) -> Tally {
        self.turns += other.turns;
        self.exact += other.exact;
        self.fuzzy += other.fuzzy;
        self.missing_predictions += other.missing_predictions;
        for (slot, e) in other.errors {
            let mine = self.errors.entry(slot).or_default();
            mine.wrong_value += e.wrong_value;
            mine.missing += e.missing;
            mine.spurious += e.spurious;
            mine.in_scope += e.in_scope;
        }
        self
    }
}

/// Scores every gold turn. The slot universe is `slots` plus every slot seen
/// in gold or predictions; slot accuracy counts a correct absence as correct.
pub fn evaluate_detailed(
    gold: &Corpus,
    preds: &PredictionSet,
    slots: &BTreeSet<SlotKey>,
    config: &EvalConfig,
) -> Result<(EvalResult, Vec<TurnScore>)> {
    EvalConfig::new(config.threshold, config.mode)?;
    preds.check_against(gold)?;
    let empty = BeliefState::new();

    let scored: Vec<(TurnScore, bool)> = par::map(gold.dialogs(), |d| {
        d.turns
            .iter()
            .map(|t| {
                let pred = preds.get(&d.id, t.index);
                let (exact_joint, fuzzy_joint, outcomes) = score_turn(&t.state, pred.unwrap_or(&empty), config);
                let score = TurnScore {
                    dialog_id: d.id.clone(),
                    turn_index: t.index,
                    exact_joint,
                    fuzzy_joint,
                    outcomes,
                };
                (score, pred.is_none())
            })
            .collect::<Vec<_>>()
    })
    .into_iter()
    .flatten()
    .collect();

    let tally = par::map_reduce(
        &scored,
        Tally::default,
        |(s, missing)| {
            let mut t = Tally {
                turns: 1,
                exact: u64::from(s.exact_joint),
                fuzzy: u64::from(s.fuzzy_joint),
                missing_predictions: u64::from(*missing),
                errors: BTreeMap::new(),
            };
            for (slot, o) in &s.outcomes {
                let e = t.errors.entry(slot.clone()).or_default();
                e.in_scope = 1;
                match o {
                    SlotOutcome::Correct => {}
                    SlotOutcome::WrongValue => e.wrong_value = 1,
                    SlotOutcome::Missing => e.missing = 1,
                    SlotOutcome::Spurious => e.spurious = 1,
                }
            }
            t
        },
        Tally::merge,
    );

    if tally.missing_predictions > 0 {
        log::warn!(
            "{} gold turn(s) have no prediction and were scored as empty states",
            tally.missing_predictions
        );
    }

    let mut universe = slots.clone();
    universe.extend(tally.errors.keys().cloned());
    let ratio = |n: u64, d: u64| if d == 0 { 0.0 } else { n as f64 / d as f64 };
    let wrong_slots: u64 = tally.errors.values().map(SlotErrors::total).sum();
    let slot_total = tally.turns * universe.len() as u64;
    let slot_accuracy = if slot_total == 0 {
        1.0
    } else {
        1.0 - wrong_slots as f64 / slot_total as f64
    };

    let result = EvalResult {
        jga: ratio(tally.exact, tally.turns),
        fuzzy_jga: ratio(tally.fuzzy, tally.turns),
        slot_accuracy,
        turn_total: tally.turns,
        fuzzy_threshold: config.threshold,
        fuzzy_mode: config.mode,
        missing_predictions: tally.missing_predictions,
        error_turn_counts: universe
            .iter()
            .map(|s| (s.clone(), tally.errors.get(s).map_or(0, SlotErrors::total)))
            .collect(),
        error_turn_fractions: universe
            .iter()
            .map(|s| {
                let e = tally.errors.get(s).copied().unwrap_or_default();
                (s.clone(), ratio(e.total(), e.in_scope))
            })
            .collect(),
        slot_errors: universe
            .iter()
            .map(|s| (s.clone(), tally.errors.get(s).copied().unwrap_or_default()))
            .collect(),
        slots: universe.into_iter().collect(),
    };
    Ok((result, scored.into_iter().map(|(s, _)| s).collect()))
}

pub fn evaluate(
    gold: &Corpus,
    preds: &PredictionSet,
    slots: &BTreeSet<SlotKey>,
    config: &EvalConfig,
) -> Result<EvalResult> {
    evaluate_detailed(gold, preds, slots, config).map(|(r, _)| r)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotDelta {
    pub before: u64,
    pub after: u64,
    pub delta: i64,
}

/// `after - before` for the headline metrics and per-slot error-turn counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalDelta {
    pub jga: f64,
    pub fuzzy_jga: f64,
    pub slot_accuracy: f64,
    pub per_slot: BTreeMap<SlotKey, SlotDelta>,
}

pub fn compare_evals(before: &EvalResult, after: &EvalResult) -> Result<EvalDelta> {
    if before.slots != after.slots {
        let a: BTreeSet<&SlotKey> = before.slots.iter().collect();
        let b: BTreeSet<&SlotKey> = after.slots.iter().collect();
        let list = |s: BTreeSet<&&SlotKey>| s.iter().map(|k| k.to_string()).collect::<Vec<_>>().join(", ");
        return Err(Error::SlotUniverseMismatch(format!(
            "only in first: [{}]; only in second: [{}]",
            list(a.difference(&b).collect()),
            list(b.difference(&a).collect())
        )));
    }
    let per_slot = before
        .slots
        .iter()
        .map(|s| {
            let x = before.error_turn_counts.get(s).copied().unwrap_or(0);
            let y = after.error_turn_counts.get(s).copied().unwrap_or(0);
            let delta = y as i64 - x as i64;
            (
                s.clone(),
                SlotDelta {
                    before: x,
                    after: y,
                    delta,
                },
            )
        })
        .collect();
    Ok(EvalDelta {
        jga: after.jga - before.jga,
        fuzzy_jga: after.fuzzy_jga - before.fuzzy_jga,
        slot_accuracy: after.slot_accuracy - before.slot_accuracy,
        per_slot,
    })
}

pub fn render_summary(r: &EvalResult) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "turns\t{}", r.turn_total);
    let _ = writeln!(out, "jga\t{:.4}", r.jga);
    let _ = writeln!(
        out,
        "fuzzy_jga\t{:.4}\t({} mode, threshold {:.2})",
        r.fuzzy_jga, r.fuzzy_mode, r.fuzzy_threshold
    );
    let _ = writeln!(out, "slot_accuracy\t{:.4}", r.slot_accuracy);
    if r.missing_predictions > 0 {
        let _ = writeln!(out, "missing_predictions\t{}", r.missing_predictions);
    }
    out
}

/// Error-turn table, one row per slot in the universe.
pub fn render_per_slot(r: &EvalResult) -> String {
    let mut out = String::from("domain\tslot_type\terror_turns\tin_scope\tfraction\twrong_value\tmissing\tspurious\n");
    for slot in &r.slots {
        let e = r.slot_errors.get(slot).copied().unwrap_or_default();
        let frac = r.error_turn_fractions.get(slot).copied().unwrap_or(0.0);
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{frac:.4}\t{}\t{}\t{}",
            slot.domain,
            slot.slot_type,
            e.total(),
            e.in_scope,
            e.wrong_value,
            e.missing,
            e.spurious
        );
    }
    out
}

/// Tab-separated audit log: one line per turn, failing slots listed as
/// `slot:outcome`.
pub fn render_per_turn(turns: &[TurnScore]) -> String {
    let mut out = String::from("dialog_id\tturn\texact\tfuzzy\terrors\n");
    for t in turns {
        let errors: Vec<String> = t
            .outcomes
            .iter()
            .filter(|(_, o)| o.is_error())
            .map(|(s, o)| format!("{s}:{}", o.as_str()))
            .collect();
        let errors = if errors.is_empty() {
            "-".to_string()
        } else {
            errors.join(",")
        };
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{errors}",
            t.dialog_id,
            t.turn_index,
            u8::from(t.exact_joint),
            u8::from(t.fuzzy_joint)
        );
    }
    out
}

pub fn render_delta(d: &EvalDelta) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "jga_delta\t{:+.4}", d.jga);
    let _ = writeln!(out, "fuzzy_jga_delta\t{:+.4}", d.fuzzy_jga);
    let _ = writeln!(out, "slot_accuracy_delta\t{:+.4}", d.slot_accuracy);
    out.push_str("domain\tslot_type\tbefore\tafter\tdelta\n");
    for (slot, s) in &d.per_slot {
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{:+}",
            slot.domain, slot.slot_type, s.before, s.after, s.delta
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Dialog, DialogTurn, SlotTriple, Split};
    use proptest::prelude::*;

    fn state(triples: &[&str]) -> BeliefState {
        BeliefState::from_triples(triples.iter().map(|t| SlotTriple::parse(t).unwrap()), false).unwrap()
    }

    fn corpus(turns: &[&[&str]]) -> Corpus {
        let turns = turns
            .iter()
            .enumerate()
            .map(|(i, st)| DialogTurn {
                index: i,
                user: "u".into(),
                system: if i + 1 == turns.len() {
                    String::new()
                } else {
                    "s".into()
                },
                state: state(st),
            })
            .collect();
        let d = Dialog {
            id: "d".into(),
            domains: ["hotel".to_string(), "train".to_string()].into(),
            turns,
        };
        Corpus::new(Split::Test, vec![d]).unwrap()
    }

    fn preds(turns: &[&[&str]]) -> PredictionSet {
        PredictionSet {
            entries: turns
                .iter()
                .enumerate()
                .map(|(i, st)| (("d".to_string(), i), state(st)))
                .collect(),
        }
    }

    #[test]
    fn appended_hotel_is_fuzzy_match() {
        let g = state(&["hotel.name=huntingdon marriott"]);
        let p = state(&["hotel.name=huntingdon marriott hotel"]);
        let (exact, fuzzy, o) = score_turn(&g, &p, &EvalConfig::default());
        assert!(!exact && fuzzy);
        assert_eq!(o.values().next(), Some(&SlotOutcome::WrongValue));
        let full = EvalConfig::new(0.9, FuzzyMode::Full).unwrap();
        assert!(!score_turn(&g, &p, &full).1);
    }

    #[test]
    fn spurious_slot() {
        let g = state(&["hotel.area=north"]);
        let p = state(&["hotel.area=north", "train.destination=cambridge"]);
        let (exact, fuzzy, o) = score_turn(&g, &p, &EvalConfig::default());
        assert!(!exact && !fuzzy);
        assert_eq!(o[&"train.destination".parse().unwrap()], SlotOutcome::Spurious);
    }

    #[test]
    fn ten_turns_one_wrong() {
        let gold_turns: Vec<&[&str]> = vec![&["hotel.area=north"]; 10];
        let mut pred_turns = gold_turns.clone();
        pred_turns[3] = &["hotel.area=south"];
        let r = evaluate(
            &corpus(&gold_turns),
            &preds(&pred_turns),
            &BTreeSet::new(),
            &EvalConfig::default(),
        )
        .unwrap();
        assert!((r.jga - 0.9).abs() < 1e-12);
        assert_eq!(r.error_turn_counts[&"hotel.area".parse().unwrap()], 1);
        assert!((r.error_turn_fractions[&"hotel.area".parse().unwrap()] - 0.1).abs() < 1e-12);
    }

    #[test]
    fn missing_turns_scored_empty() {
        let gold_turns: Vec<&[&str]> = vec![&[], &["hotel.area=north"]];
        let mut p = preds(&gold_turns);
        p.entries.remove(&("d".to_string(), 1));
        let r = evaluate(&corpus(&gold_turns), &p, &BTreeSet::new(), &EvalConfig::default()).unwrap();
        assert_eq!(r.missing_predictions, 1);
        assert!((r.jga - 0.5).abs() < 1e-12);
    }

    #[test]
    fn unknown_turn_is_error() {
        let gold_turns: Vec<&[&str]> = vec![&[]];
        let mut p = preds(&gold_turns);
        p.entries.insert(("d".to_string(), 5), BeliefState::new());
        assert!(evaluate(&corpus(&gold_turns), &p, &BTreeSet::new(), &EvalConfig::default()).is_err());
    }

    #[test]
    fn threshold_bounds() {
        assert!(EvalConfig::new(1.01, FuzzyMode::Partial).is_err());
        assert!(EvalConfig::new(0.0, FuzzyMode::Partial).is_err());
        assert!(EvalConfig::new(1.0, FuzzyMode::Full).is_ok());
    }

    #[test]
    fn slot_accuracy_counts_correct_absence() {
        let universe: BTreeSet<SlotKey> = ["hotel.area", "hotel.name", "train.day", "train.destination"]
            .iter()
            .map(|s| s.parse().unwrap())
            .collect();
        let g: Vec<&[&str]> = vec![&["hotel.area=north"]];
        let p: Vec<&[&str]> = vec![&["hotel.area=south"]];
        let r = evaluate(&corpus(&g), &preds(&p), &universe, &EvalConfig::default()).unwrap();
        assert!((r.slot_accuracy - 0.75).abs() < 1e-12);
    }

    #[test]
    fn compare_identical_and_mismatched() {
        let g: Vec<&[&str]> = vec![&["hotel.area=north"]];
        let r = evaluate(&corpus(&g), &preds(&g), &BTreeSet::new(), &EvalConfig::default()).unwrap();
        let d = compare_evals(&r, &r).unwrap();
        assert_eq!(d.jga, 0.0);
        assert!(d.per_slot.values().all(|s| s.delta == 0));
        let mut other = r.clone();
        other.slots.push("train.day".parse().unwrap());
        let err = compare_evals(&r, &other).unwrap_err().to_string();
        assert!(err.contains("train.day"), "{err}");
    }

    fn arb_state() -> impl Strategy<Value = BeliefState> {
        let slots = ["hotel.area", "hotel.name", "train.day"];
        let values = ["north", "northe", "acorn", "acorn house", "monday"];
        proptest::collection::btree_map(0..slots.len(), 0..values.len(), 0..=3).prop_map(move |m| {
            let triples = m
                .into_iter()
                .map(|(s, v)| SlotTriple::parse(&format!("{}={}", slots[s], values[v])).unwrap());
            BeliefState::from_triples(triples, false).unwrap()
        })
    }

    proptest! {
        #[test]
        fn exact_implies_fuzzy(g in arb_state(), p in arb_state(), t in 0.05f64..=1.0, full in any::<bool>()) {
            let mode = if full { FuzzyMode::Full } else { FuzzyMode::Partial };
            let (exact, fuzzy, _) = score_turn(&g, &p, &EvalConfig::new(t, mode).unwrap());
            prop_assert!(!exact || fuzzy);
        }

        #[test]
        fn fuzzy_monotone_in_threshold(g in arb_state(), p in arb_state(), a in 0.05f64..=1.0, b in 0.05f64..=1.0) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            for mode in [FuzzyMode::Full, FuzzyMode::Partial] {
                let at_hi = score_turn(&g, &p, &EvalConfig::new(hi, mode).unwrap()).1;
                let at_lo = score_turn(&g, &p, &EvalConfig::new(lo, mode).unwrap()).1;
                prop_assert!(!at_hi || at_lo);
            }
        }

        #[test]
        fn swap_swaps_missing_and_spurious(g in arb_state(), p in arb_state()) {
            let cfg = EvalConfig::default();
            let (_, _, fwd) = score_turn(&g, &p, &cfg);
            let (_, _, rev) = score_turn(&p, &g, &cfg);
            prop_assert_eq!(fwd.len(), rev.len());
            for (slot, o) in fwd {
                let expected = match o {
                    SlotOutcome::Missing => SlotOutcome::Spurious,
                    SlotOutcome::Spurious => SlotOutcome::Missing,
                    other => other,
                };
                prop_assert_eq!(rev[&slot], expected);
            }
        }
    }
}
