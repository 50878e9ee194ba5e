use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{Corpus, Dialog};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Stratum {
    Modified,
    Unchanged,
}

impl Stratum {
    pub fn as_str(self) -> &'static str {
        match self {
            Stratum::Modified => "modified",
            Stratum::Unchanged => "unchanged",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Label {
    Correct,
    Incorrect,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WorksheetRow {
    pub dialog_id: String,
    pub stratum: Stratum,
    /// `t<turn> +slot=value` / `t<turn> ~slot=old->new` entries, `;`-joined.
    pub diff: String,
    pub label: Option<Label>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Worksheet {
    pub rows: Vec<WorksheetRow>,
}

const WORKSHEET_HEADER: &str = "dialog_id\tstratum\tdiff\tlabel";

fn dialog_diff(before: &Dialog, after: &Dialog) -> String {
    let mut parts = Vec::new();
    for (b, a) in before.turns.iter().zip(&after.turns) {
        for (slot, value) in a.state.iter() {
            match b.state.get(slot) {
                None => parts.push(format!("t{} +{slot}={value}", a.index)),
                Some(old) if old != value => parts.push(format!("t{} ~{slot}={old}->{value}", a.index)),
                Some(_) => {}
            }
        }
        for (slot, value) in b.state.iter() {
            if !a.state.contains_slot(slot) {
                parts.push(format!("t{} -{slot}={value}", a.index));
            }
        }
    }
    parts.join("; ")
}

/// Seeded stratified sample of modified and unchanged dialogs.
pub fn sample_verification(
    before: &Corpus,
    after: &Corpus,
    n_modified: usize,
    n_unchanged: usize,
    seed: u64,
) -> Result<Worksheet> {
    let mut modified = Vec::new();
    let mut unchanged = Vec::new();
    for b in before.dialogs() {
        let a = after
            .get(&b.id)
            .ok_or_else(|| Error::Invalid(format!("dialog `{}` missing from the corrected corpus", b.id)))?;
        if a == b {
            unchanged.push((b, a));
        } else {
            modified.push((b, a));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(n_modified + n_unchanged);
    for (stratum, pool, n) in [
        (Stratum::Modified, &modified, n_modified),
        (Stratum::Unchanged, &unchanged, n_unchanged),
    ] {
        if pool.len() < n {
            return Err(Error::StratumTooSmall {
                stratum: stratum.as_str(),
                available: pool.len(),
                requested: n,
            });
        }
        let mut picked: Vec<_> = pool.choose_multiple(&mut rng, n).collect();
        picked.sort_by(|x, y| x.0.id.cmp(&y.0.id));
        rows.extend(picked.into_iter().map(|(b, a)| WorksheetRow {
            dialog_id: b.id.clone(),
            stratum,
            diff: dialog_diff(b, a),
            label: None,
        }));
    }
    Ok(Worksheet { rows })
}

impl Worksheet {
    pub fn to_tsv(&self) -> String {
        let mut out = String::from(WORKSHEET_HEADER);
        out.push('\n');
        for r in &self.rows {
            let label = match r.label {
                None => "",
                Some(Label::Correct) => "correct",
                Some(Label::Incorrect) => "incorrect",
            };
            let diff = if r.diff.is_empty() { "-" } else { &r.diff };
            let _ = writeln!(out, "{}\t{}\t{diff}\t{label}", r.dialog_id, r.stratum.as_str());
        }
        out
    }

    /// Confusion counts from labels: a correct modification is a true
    /// positive, a correctly unchanged dialog a true negative.
    pub fn counts(&self) -> VerificationCounts {
        let mut c = VerificationCounts::default();
        for r in &self.rows {
            match (r.stratum, r.label) {
                (_, None) => c.unlabeled += 1,
                (Stratum::Modified, Some(Label::Correct)) => c.tp += 1,
                (Stratum::Modified, Some(Label::Incorrect)) => c.fp += 1,
                (Stratum::Unchanged, Some(Label::Correct)) => c.tn += 1,
                (Stratum::Unchanged, Some(Label::Incorrect)) => c.fn_ += 1,
            }
        }
        c
    }
}

pub fn parse_worksheet(text: &str) -> Result<Worksheet> {
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() || (i == 0 && line.starts_with("dialog_id\t")) {
            continue;
        }
        let bad = |m: String| Error::Invalid(format!("worksheet line {}: {m}", i + 1));
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() < 3 || cols.len() > 4 {
            return Err(bad(format!("expected 4 columns, found {}", cols.len())));
        }
        let stratum = match cols[1] {
            "modified" => Stratum::Modified,
            "unchanged" => Stratum::Unchanged,
            other => return Err(bad(format!("unknown stratum `{other}`"))),
        };
        let label = match cols.get(3).map(|s| s.trim().to_lowercase()).as_deref() {
            None | Some("") => None,
            Some("correct" | "c" | "1" | "true") => Some(Label::Correct),
            Some("incorrect" | "i" | "0" | "false") => Some(Label::Incorrect),
            Some(other) => return Err(bad(format!("unknown label `{other}`"))),
        };
        rows.push(WorksheetRow {
            dialog_id: cols[0].to_string(),
            stratum,
            diff: if cols[2] == "-" {
                String::new()
            } else {
                cols[2].to_string()
            },
            label,
        });
    }
    Ok(Worksheet { rows })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct VerificationCounts {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
    pub unlabeled: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerificationMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub warnings: Vec<String>,
}

/// Standard precision, recall and F1. Zero denominators yield 0.0 and a
/// warning.
pub fn verification_metrics(tp: u64, fp: u64, fn_: u64, tn: u64) -> VerificationMetrics {
    let mut warnings = Vec::new();
    if tp + fp + fn_ + tn == 0 {
        warnings.push("no labeled dialogs".to_string());
    }
    let ratio = |num: u64, den: u64, what: &str, warnings: &mut Vec<String>| {
        if den == 0 {
            warnings.push(format!("{what} undefined (zero denominator), reported as 0"));
            0.0
        } else {
            num as f64 / den as f64
        }
    };
    let precision = ratio(tp, tp + fp, "precision", &mut warnings);
    let recall = ratio(tp, tp + fn_, "recall", &mut warnings);
    let f1 = if precision + recall == 0.0 {
        warnings.push("f1 undefined (precision + recall = 0), reported as 0".to_string());
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    for w in &warnings {
        log::warn!("{w}");
    }
    VerificationMetrics {
        precision,
        recall,
        f1,
        warnings,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_four_counts() {
        let m = verification_metrics(97, 3, 4, 96);
        assert!((m.precision - 0.970).abs() < 1e-3);
        assert!((m.recall - 0.960).abs() < 1e-3);
        assert!((m.f1 - 0.965).abs() < 1e-3);
        assert!(m.warnings.is_empty());
    }

    #[test]
    fn zero_denominators_warn() {
        let m = verification_metrics(0, 0, 5, 5);
        assert_eq!(m.precision, 0.0);
        assert!(!m.warnings.is_empty());
    }

    #[test]
    fn symmetric_counts() {
        let m = verification_metrics(7, 7, 7, 3);
        assert_eq!(m.precision, m.recall);
        assert!((m.f1 - m.precision).abs() < 1e-15);
    }

    #[test]
    fn worksheet_parse_and_count() {
        let text = "dialog_id\tstratum\tdiff\tlabel\n\
                    a\tmodified\tt1 +hotel.area=north\tcorrect\n\
                    b\tmodified\tt1 +hotel.area=south\tincorrect\n\
                    c\tunchanged\t-\tcorrect\n\
                    d\tunchanged\t-\tincorrect\n\
                    e\tunchanged\t-\t\n";
        let ws = parse_worksheet(text).unwrap();
        let c = ws.counts();
        assert_eq!((c.tp, c.fp, c.tn, c.fn_, c.unlabeled), (1, 1, 1, 1, 1));
        assert!(parse_worksheet("a\tsideways\t-\t").is_err());
    }
}
