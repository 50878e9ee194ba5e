use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{CorrectionRecord, Side};
use crate::error::{Error, Result};
use crate::model::{Corpus, SlotKey, Split};

/// Modified-dialog counts for one split.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitStats {
    pub dialogs: usize,
    /// Dialogs whose domain set contains the domain.
    pub domain_dialogs: BTreeMap<String, usize>,
    /// Dialogs with at least one applied record for the slot.
    pub modified: BTreeMap<SlotKey, usize>,
    pub modified_domain: BTreeMap<String, usize>,
    pub modified_total: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceCounts {
    pub user: usize,
    pub system: usize,
}

impl SourceCounts {
    pub fn total(&self) -> usize {
        self.user + self.system
    }

    /// `(user, system)` fractions; `(0, 0)` when nothing was added.
    pub fn fractions(&self) -> (f64, f64) {
        match self.total() {
            0 => (0.0, 0.0),
            n => (self.user as f64 / n as f64, self.system as f64 / n as f64),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorrectionStats {
    pub splits: BTreeMap<Split, SplitStats>,
    pub sources: BTreeMap<SlotKey, SourceCounts>,
}

/// Counts dialogs touched by `records` in `before`. `after` must hold the
/// same dialog ids.
pub fn correction_stats(before: &Corpus, after: &Corpus, records: &[CorrectionRecord]) -> Result<CorrectionStats> {
    let ids_before: Vec<&str> = before.dialogs().iter().map(|d| d.id.as_str()).collect();
    let ids_after: Vec<&str> = after.dialogs().iter().map(|d| d.id.as_str()).collect();
    if ids_before != ids_after {
        return Err(Error::Invalid("corpora are not aligned by dialog id".into()));
    }

    let mut split = SplitStats {
        dialogs: before.len(),
        ..SplitStats::default()
    };
    for dialog in before.dialogs() {
        for domain in &dialog.domains {
            *split.domain_dialogs.entry(domain.clone()).or_default() += 1;
        }
    }

    let mut per_dialog: BTreeMap<&str, BTreeSet<&SlotKey>> = BTreeMap::new();
    let mut sources: BTreeMap<SlotKey, SourceCounts> = BTreeMap::new();
    for rec in records {
        if before.get(&rec.dialog_id).is_none() {
            return Err(Error::BadCorrection {
                dialog: rec.dialog_id.clone(),
                turn: rec.turn,
                message: "record for a dialog outside the corpus".into(),
            });
        }
        per_dialog.entry(&rec.dialog_id).or_default().insert(&rec.added.slot);
        let counts = sources.entry(rec.added.slot.clone()).or_default();
        match rec.side {
            Side::User => counts.user += 1,
            Side::System => counts.system += 1,
        }
    }
    for slots in per_dialog.values() {
        split.modified_total += 1;
        for slot in slots {
            *split.modified.entry((*slot).clone()).or_default() += 1;
        }
        let domains: BTreeSet<&str> = slots.iter().map(|s| s.domain.as_str()).collect();
        for domain in domains {
            *split.modified_domain.entry(domain.to_string()).or_default() += 1;
        }
    }
    Ok(CorrectionStats {
        splits: [(before.split, split)].into(),
        sources,
    })
}

/// `count (pct%)` with one decimal; `0 (0.0%)` for an empty denominator.
pub fn format_count(count: usize, total: usize) -> String {
    let pct = if total == 0 {
        0.0
    } else {
        100.0 * count as f64 / total as f64
    };
    format!("{count} ({pct:.1}%)")
}

impl CorrectionStats {
    /// Combines stats for different splits. Order-insensitive.
    pub fn merge(mut self, other: CorrectionStats) -> Result<CorrectionStats> {
        for (split, stats) in other.splits {
            if self.splits.contains_key(&split) {
                return Err(Error::Invalid(format!("split {split} given twice")));
            }
            self.splits.insert(split, stats);
        }
        for (slot, counts) in other.sources {
            let c = self.sources.entry(slot).or_default();
            c.user += counts.user;
            c.system += counts.system;
        }
        Ok(self)
    }

    /// Modified-dialog table: one column per split, per-slot rows, a total
    /// row per domain and a grand total.
    pub fn render_table(&self) -> String {
        let splits: Vec<&Split> = self.splits.keys().collect();
        let mut out = String::from("domain\tslot_type");
        for s in &splits {
            let _ = write!(out, "\t{s}");
        }
        out.push('\n');

        let slots: BTreeSet<&SlotKey> = self.splits.values().flat_map(|s| s.modified.keys()).collect();
        let mut domains: BTreeSet<&str> = self
            .splits
            .values()
            .flat_map(|s| s.domain_dialogs.keys().map(String::as_str))
            .collect();
        domains.extend(slots.iter().map(|s| s.domain.as_str()));

        for domain in domains {
            for slot in slots.iter().filter(|s| s.domain == domain) {
                let _ = write!(out, "{domain}\t{}", slot.slot_type);
                for s in &splits {
                    let st = &self.splits[*s];
                    let n = st.modified.get(*slot).copied().unwrap_or(0);
                    let d = st.domain_dialogs.get(domain).copied().unwrap_or(0);
                    let _ = write!(out, "\t{}", format_count(n, d));
                }
                out.push('\n');
            }
            let _ = write!(out, "{domain}\ttotal");
            for s in &splits {
                let st = &self.splits[*s];
                let n = st.modified_domain.get(domain).copied().unwrap_or(0);
                let d = st.domain_dialogs.get(domain).copied().unwrap_or(0);
                let _ = write!(out, "\t{}", format_count(n, d));
            }
            out.push('\n');
        }
        out.push_str("total\t");
        for s in &splits {
            let st = &self.splits[*s];
            let _ = write!(out, "\t{}", format_count(st.modified_total, st.dialogs));
        }
        out.push('\n');
        out
    }

    /// Per-slot user/system source counts and fractions.
    pub fn render_sources(&self) -> String {
        let mut out = String::from("domain\tslot_type\tuser\tsystem\tuser_fraction\tsystem_fraction\n");
        let mut total = SourceCounts::default();
        for (slot, c) in &self.sources {
            let (u, s) = c.fractions();
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}\t{u:.3}\t{s:.3}",
                slot.domain, slot.slot_type, c.user, c.system
            );
            total.user += c.user;
            total.system += c.system;
        }
        let (u, s) = total.fractions();
        let _ = writeln!(out, "total\t\t{}\t{}\t{u:.3}\t{s:.3}", total.user, total.system);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::consistency::Status;
    use crate::model::{BeliefState, Dialog, DialogTurn, SlotTriple};

    fn corpus(n: usize, domain: &str) -> Corpus {
        let dialogs = (0..n)
            .map(|i| Dialog {
                id: format!("d{i:02}"),
                domains: [domain.to_string()].into(),
                turns: vec![DialogTurn {
                    index: 0,
                    user: "hi".into(),
                    system: String::new(),
                    state: BeliefState::new(),
                }],
            })
            .collect();
        Corpus::new(Split::Train, dialogs).unwrap()
    }

    fn rec(id: &str, slot: &str, side: Side) -> CorrectionRecord {
        CorrectionRecord {
            dialog_id: id.into(),
            turn: 0,
            added: SlotTriple::new(slot.parse().unwrap(), "x").unwrap(),
            side,
            rule_id: "r".into(),
            status: Status::Applied,
        }
    }

    #[test]
    fn four_of_ten() {
        let c = corpus(10, "attraction");
        let recs: Vec<_> = (0..4)
            .map(|i| rec(&format!("d{i:02}"), "attraction.name", Side::System))
            .collect();
        let stats = correction_stats(&c, &c, &recs).unwrap();
        let table = stats.render_table();
        assert!(table.contains("attraction\tname\t4 (40.0%)\n"), "{table}");
        assert!(table.contains("total\t\t4 (40.0%)\n"));
        assert_eq!(
            stats.sources[&"attraction.name".parse().unwrap()].fractions(),
            (0.0, 1.0)
        );
    }

    #[test]
    fn no_corrections() {
        let c = corpus(3, "hotel");
        let stats = correction_stats(&c, &c, &[]).unwrap();
        assert_eq!(
            stats.render_table(),
            "domain\tslot_type\ttrain\nhotel\ttotal\t0 (0.0%)\ntotal\t\t0 (0.0%)\n"
        );
        assert!(stats.render_sources().ends_with("total\t\t0\t0\t0.000\t0.000\n"));
    }

    #[test]
    fn count_cell_format() {
        assert_eq!(format_count(1019, 2681), "1019 (38.0%)");
        assert_eq!(format_count(0, 0), "0 (0.0%)");
    }

    #[test]
    fn one_dialog_many_slots_counts_once() {
        let c = corpus(2, "hotel");
        let recs = [
            rec("d00", "hotel.area", Side::User),
            rec("d00", "hotel.name", Side::System),
        ];
        let stats = correction_stats(&c, &c, &recs).unwrap();
        let st = &stats.splits[&Split::Train];
        assert_eq!(st.modified_total, 1);
        assert_eq!(st.modified_domain["hotel"], 1);
    }
}
