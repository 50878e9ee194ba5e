//! Entity bias: slot-value frequency vectors and their normalized Shannon
//! entropy and min-entropy.
//!
//! Both metrics are normalized by `ln R`, where `R` is the number of distinct
//! values actually observed for the slot (not the ontology size). Logarithms
//! are natural; the base cancels in the ratio.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Corpus, Dialog, SlotKey};
use crate::par;

/// Which occurrences of a value count.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CountingPolicy {
    /// Once per dialog, from the final turn's state.
    #[default]
    FinalState,
    /// Once per turn whose state holds the value.
    PerTurn,
    /// Once each time a slot is set to a value different from the previous
    /// turn's.
    NewAssignment,
}

impl CountingPolicy {
    pub fn as_str(self) -> &'static str {
        match self {
            CountingPolicy::FinalState => "final-state",
            CountingPolicy::PerTurn => "per-turn",
            CountingPolicy::NewAssignment => "new-assignment",
        }
    }
}

impl fmt::Display for CountingPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CountingPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "final-state" => Ok(CountingPolicy::FinalState),
            "per-turn" => Ok(CountingPolicy::PerTurn),
            "new-assignment" => Ok(CountingPolicy::NewAssignment),
            other => Err(Error::Invalid(format!("unknown counting policy `{other}`"))),
        }
    }
}

/// Occurrence counts of the values of one slot. All counts are positive.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrequencyVector {
    pub slot: SlotKey,
    pub counts: BTreeMap<String, u64>,
}

impl FrequencyVector {
    pub fn new(slot: SlotKey, counts: impl IntoIterator<Item = (String, u64)>) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (value, count) in counts {
            if count == 0 {
                return Err(Error::Invalid(format!("{slot}: zero count for `{value}`")));
            }
            *map.entry(value).or_insert(0) += count;
        }
        if map.is_empty() {
            return Err(Error::Invalid(format!("{slot}: empty frequency vector")));
        }
        Ok(FrequencyVector { slot, counts: map })
    }

    /// Number of distinct observed values.
    pub fn support(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> u64 {
        self.counts.values().sum()
    }

    /// Relative frequencies in value order.
    pub fn relative(&self) -> Vec<f64> {
        let total = self.total() as f64;
        self.counts.values().map(|c| *c as f64 / total).collect()
    }

    /// Most frequent value; ties go to the lexicographically smallest.
    pub fn top(&self) -> (&str, u64) {
        let mut best: Option<(&str, u64)> = None;
        for (v, c) in &self.counts {
            if best.is_none_or(|(_, bc)| *c > bc) {
                best = Some((v, *c));
            }
        }
        best.expect("non-empty")
    }
}

/// `H1/H0 = Σ r_i log_R(1/r_i)`; `None` when `R < 2`.
pub fn shannon_normalized(freq: &FrequencyVector) -> Option<f64> {
    let r = freq.support();
    if r < 2 {
        return None;
    }
    let total = freq.total() as f64;
    let h: f64 = freq
        .counts
        .values()
        .map(|c| {
            let p = *c as f64 / total;
            -p * p.ln()
        })
        .sum();
    Some((h / (r as f64).ln()).clamp(0.0, 1.0))
}

/// `H∞/H0 = log_R(1 / max_i r_i)`, the normalized surprisal of the most
/// frequent value; `None` when `R < 2`.
pub fn min_entropy_normalized(freq: &FrequencyVector) -> Option<f64> {
    let r = freq.support();
    if r < 2 {
        return None;
    }
    let (_, top) = freq.top();
    let h = (freq.total() as f64 / top as f64).ln();
    Some((h / (r as f64).ln()).clamp(0.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasScore {
    pub slot: SlotKey,
    pub support: usize,
    pub shannon_normalized: f64,
    pub min_entropy_normalized: f64,
    /// Set when `R = 1`; both scores are then reported as 0.
    pub degenerate: bool,
    pub top_value: String,
    pub top_frequency: f64,
}

impl BiasScore {
    pub fn from_frequencies(freq: &FrequencyVector) -> Self {
        let (top_value, top) = freq.top();
        let shannon = shannon_normalized(freq);
        let min = min_entropy_normalized(freq);
        let degenerate = shannon.is_none();
        let min = min.unwrap_or(0.0);
        // rounding can leave H1 a few ulps under H∞ on near-uniform vectors
        let shannon = shannon.unwrap_or(0.0).max(min);
        BiasScore {
            slot: freq.slot.clone(),
            support: freq.support(),
            shannon_normalized: shannon,
            min_entropy_normalized: min,
            degenerate,
            top_value: top_value.to_string(),
            top_frequency: top as f64 / freq.total() as f64,
        }
    }
}

type Counts = BTreeMap<SlotKey, BTreeMap<String, u64>>;

fn count_dialog(dialog: &Dialog, policy: CountingPolicy) -> Counts {
    let mut counts = Counts::new();
    let mut bump = |slot: &SlotKey, value: &str| {
        *counts
            .entry(slot.clone())
            .or_default()
            .entry(value.to_string())
            .or_default() += 1;
    };
    match policy {
        CountingPolicy::FinalState => {
            if let Some(state) = dialog.final_state() {
                state.iter().for_each(|(s, v)| bump(s, v));
            }
        }
        CountingPolicy::PerTurn => {
            for turn in &dialog.turns {
                turn.state.iter().for_each(|(s, v)| bump(s, v));
            }
        }
        CountingPolicy::NewAssignment => {
            let mut prev: Option<&crate::model::BeliefState> = None;
            for turn in &dialog.turns {
                for (slot, value) in turn.state.iter() {
                    if prev.and_then(|p| p.get(slot)) != Some(value) {
                        bump(slot, value);
                    }
                }
                prev = Some(&turn.state);
            }
        }
    }
    counts
}

fn merge_counts(mut a: Counts, b: Counts) -> Counts {
    for (slot, values) in b {
        let target = a.entry(slot).or_default();
        for (v, c) in values {
            *target.entry(v).or_default() += c;
        }
    }
    a
}

/// One frequency vector per slot present in the corpus, in slot order.
pub fn count_slot_values(corpus: &Corpus, policy: CountingPolicy) -> Vec<FrequencyVector> {
    let counts = par::map_reduce(corpus.dialogs(), Counts::new, |d| count_dialog(d, policy), merge_counts);
    counts
        .into_iter()
        .map(|(slot, counts)| FrequencyVector { slot, counts })
        .collect()
}

/// Scores sorted from least to most uniform (ascending `H1/H0`), ties by slot.
pub fn bias_report(corpus: &Corpus, policy: CountingPolicy) -> Vec<BiasScore> {
    rank(
        count_slot_values(corpus, policy)
            .iter()
            .map(BiasScore::from_frequencies)
            .collect(),
    )
}

pub fn rank(mut scores: Vec<BiasScore>) -> Vec<BiasScore> {
    scores.sort_by(|a, b| {
        a.shannon_normalized
            .total_cmp(&b.shannon_normalized)
            .then_with(|| a.slot.cmp(&b.slot))
    });
    scores
}

/// Tab-separated report. The first line names the counting policy; slots with
/// `R = 1` show both scores as 0.
pub fn render_report(scores: &[BiasScore], policy: CountingPolicy, split: Option<&str>) -> String {
    let mut out = format!("# policy: {policy}");
    if let Some(split) = split {
        let _ = write!(out, "\tsplit: {split}");
    }
    out.push('\n');
    out.push_str("domain\tslot_type\tR\tH1/H0\tHinf/H0\ttop1_value\ttop1_frequency\n");
    for s in scores {
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{:.3}\t{:.3}\t{}\t{:.3}",
            s.slot.domain,
            s.slot.slot_type,
            s.support,
            s.shannon_normalized,
            s.min_entropy_normalized,
            s.top_value,
            s.top_frequency
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{BeliefState, DialogTurn, SlotTriple, Split};
    use proptest::prelude::*;

    fn freq(counts: &[u64]) -> FrequencyVector {
        FrequencyVector::new(
            "train.destination".parse().unwrap(),
            counts.iter().enumerate().map(|(i, c)| (format!("v{i:03}"), *c)),
        )
        .unwrap()
    }

    // Independent oracles: entropies written directly over the probability
    // vector, base-R logs.
    fn oracle_shannon(counts: &[u64]) -> f64 {
        let t: u64 = counts.iter().sum();
        let r = counts.len() as f64;
        counts
            .iter()
            .map(|c| {
                let p = *c as f64 / t as f64;
                p * (1.0 / p).log(r)
            })
            .sum()
    }

    fn oracle_min(counts: &[u64]) -> f64 {
        let t: u64 = counts.iter().sum();
        let max = *counts.iter().max().unwrap() as f64 / t as f64;
        (1.0 / max).log(counts.len() as f64)
    }

    #[test]
    fn uniform_is_one() {
        for r in 2..=50 {
            let f = freq(&vec![7; r]);
            assert!((shannon_normalized(&f).unwrap() - 1.0).abs() < 1e-12);
            assert!((min_entropy_normalized(&f).unwrap() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn degenerate_single_value() {
        let f = freq(&[5]);
        assert_eq!(shannon_normalized(&f), None);
        let s = BiasScore::from_frequencies(&f);
        assert!(s.degenerate);
        assert_eq!((s.shannon_normalized, s.min_entropy_normalized), (0.0, 0.0));
    }

    #[test]
    fn near_deterministic_tends_to_zero() {
        let mut last = 1.0;
        for k in [10u64, 1_000, 100_000, 10_000_000] {
            let h = shannon_normalized(&freq(&[k, 1])).unwrap();
            assert!(h < last);
            last = h;
        }
        assert!(last < 1e-5);
    }

    #[test]
    fn hotel_internet_counts() {
        // 10023 / 326 / 9 reproduce ~0.134 / ~0.030, not the 0.225 / 0.053 row.
        let f = freq(&[10023, 326, 9]);
        assert!((shannon_normalized(&f).unwrap() - 0.1336).abs() < 1e-3);
        assert!((min_entropy_normalized(&f).unwrap() - 0.0299).abs() < 1e-3);
    }

    #[test]
    fn skewed_slot_ranks_first() {
        let dialog = |i: usize, area: &str, stars: &str| Dialog {
            id: format!("d{i}"),
            domains: ["hotel".to_string()].into(),
            turns: vec![DialogTurn {
                index: 0,
                user: "u".into(),
                system: String::new(),
                state: BeliefState::from_triples(
                    [
                        SlotTriple::parse(&format!("hotel.area={area}")).unwrap(),
                        SlotTriple::parse(&format!("hotel.stars={stars}")).unwrap(),
                    ],
                    false,
                )
                .unwrap(),
            }],
        };
        // area uniform over 2 values; stars 3:1
        let dialogs = vec![
            dialog(0, "north", "4"),
            dialog(1, "south", "4"),
            dialog(2, "north", "4"),
            dialog(3, "south", "2"),
        ];
        let corpus = Corpus::new(Split::Train, dialogs).unwrap();
        let report = bias_report(&corpus, CountingPolicy::FinalState);
        assert_eq!(report[0].slot.to_string(), "hotel.stars");
        // -(.75 ln .75 + .25 ln .25) / ln 2
        assert!((report[0].shannon_normalized - 0.811_278_124_459_132_9).abs() < 1e-12);
        assert!((report[0].min_entropy_normalized - 0.415_037_499_278_843_8).abs() < 1e-12);
        assert_eq!(report[1].shannon_normalized, 1.0);
    }

    #[test]
    fn policies() {
        let turn = |i, triples: &[&str]| DialogTurn {
            index: i,
            user: "u".into(),
            system: if i < 2 { "s".into() } else { String::new() },
            state: BeliefState::from_triples(triples.iter().map(|t| SlotTriple::parse(t).unwrap()), false).unwrap(),
        };
        let d = Dialog {
            id: "d".into(),
            domains: ["hotel".to_string()].into(),
            turns: vec![
                turn(0, &["hotel.area=north"]),
                turn(1, &["hotel.area=north"]),
                turn(2, &["hotel.area=south"]),
            ],
        };
        let c = Corpus::new(Split::Train, vec![d]).unwrap();
        let get = |p| {
            count_slot_values(&c, p)[0]
                .counts
                .iter()
                .map(|(k, v)| (k.clone(), *v))
                .collect::<Vec<_>>()
        };
        assert_eq!(get(CountingPolicy::FinalState), [("south".to_string(), 1)]);
        assert_eq!(
            get(CountingPolicy::PerTurn),
            [("north".to_string(), 2), ("south".to_string(), 1)]
        );
        assert_eq!(
            get(CountingPolicy::NewAssignment),
            [("north".to_string(), 1), ("south".to_string(), 1)]
        );
        assert!(count_slot_values(&Corpus::empty(Split::Train), CountingPolicy::PerTurn).is_empty());
    }

    proptest! {
        #[test]
        fn matches_oracle(counts in prop::collection::vec(1u64..10_000, 2..40)) {
            let f = freq(&counts);
            prop_assert!((shannon_normalized(&f).unwrap() - oracle_shannon(&counts)).abs() < 1e-9);
            prop_assert!((min_entropy_normalized(&f).unwrap() - oracle_min(&counts)).abs() < 1e-9);
        }

        #[test]
        fn min_entropy_bounds_shannon(counts in prop::collection::vec(1u64..1_000_000, 2..60)) {
            let s = BiasScore::from_frequencies(&freq(&counts));
            prop_assert!(s.min_entropy_normalized <= s.shannon_normalized);
            prop_assert!((0.0..=1.0).contains(&s.shannon_normalized));
        }

        #[test]
        fn permutation_and_scale_invariant(
            counts in prop::collection::vec(1u64..1000, 2..20),
            k in 1u64..50,
            rot in 0usize..20,
        ) {
            let base = BiasScore::from_frequencies(&freq(&counts));
            let mut rotated = counts.clone();
            let n = rotated.len();
            rotated.rotate_left(rot % n);
            let scaled: Vec<u64> = rotated.iter().map(|c| c * k).collect();
            let other = BiasScore::from_frequencies(&freq(&scaled));
            prop_assert!((base.shannon_normalized - other.shannon_normalized).abs() < 1e-12);
            prop_assert!((base.min_entropy_normalized - other.min_entropy_normalized).abs() < 1e-12);
        }

        #[test]
        fn merging_equal_counts_never_raises_entropy(
            counts in prop::collection::vec(1u64..100, 3..10),
            pick in 0usize..10,
        ) {
            // merge two categories that hold the same count into one, and
            // compare raw (unnormalized) Shannon entropy by brute force
            let mut v = counts.clone();
            let i = pick % v.len();
            let j = (i + 1) % v.len();
            v[j] = v[i];
            let raw = |c: &[u64]| {
                let t: u64 = c.iter().sum();
                c.iter().map(|x| { let p = *x as f64 / t as f64; -p * p.ln() }).sum::<f64>()
            };
            let mut merged = v.clone();
            let (a, b) = (i.max(j), i.min(j));
            let moved = merged.remove(a);
            merged[b] += moved;
            prop_assert!(raw(&merged) <= raw(&v) + 1e-12);
        }
    }
}
