//! Unseen-entity test sets: every value of a replaceable slot is swapped,
//! in belief states and utterances alike, for a value drawn from an external
//! lexicon that never occurs in the training corpus.
//!
//! Mappings are scoped per dialog. Within a dialog the same original text
//! always maps to the same replacement, even when it fills several slots.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;
use sha2::{Digest, Sha256};

use crate::canonicalize::{normalize_text, tokenize, NormalizationConfig};
use crate::error::{Error, Result};
use crate::io::read_jsonl;
use crate::model::{Corpus, Dialog, SlotKey, SlotTriple};
use crate::par;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pool {
    pub replaceable: bool,
    pub values: Vec<String>,
    pub provenance: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ReplacementLexicon {
    pub pools: BTreeMap<SlotKey, Pool>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct LexiconRecord {
    slot: SlotKey,
    #[serde(default = "default_true")]
    replaceable: bool,
    #[serde(default)]
    values: Vec<String>,
    #[serde(default)]
    provenance: String,
}

fn default_true() -> bool {
    true
}

impl ReplacementLexicon {
    /// Pool values are normalized and deduplicated; a replaceable pool must
    /// not be empty.
    pub fn new(pools: impl IntoIterator<Item = (SlotKey, Pool)>) -> Result<Self> {
        let norm = NormalizationConfig::default();
        let mut out = BTreeMap::new();
        for (slot, mut pool) in pools {
            let mut seen = BTreeSet::new();
            pool.values = pool
                .values
                .iter()
                .map(|v| normalize_text(v, &norm))
                .filter(|v| !v.is_empty() && seen.insert(v.clone()))
                .collect();
            if pool.replaceable && pool.values.is_empty() {
                return Err(Error::Invalid(format!("lexicon pool for {slot} is empty")));
            }
            if out.insert(slot.clone(), pool).is_some() {
                return Err(Error::Invalid(format!("lexicon pool for {slot} declared twice")));
            }
        }
        Ok(ReplacementLexicon { pools: out })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let records: Vec<LexiconRecord> = read_jsonl(path)?;
        Self::new(records.into_iter().map(|r| {
            (
                r.slot,
                Pool {
                    replaceable: r.replaceable,
                    values: r.values,
                    provenance: r.provenance,
                },
            )
        }))
    }
}

#[derive(Debug, Clone)]
pub struct SubstitutionConfig {
    pub normalization: NormalizationConfig,
    /// Time and count slots; never replaced unless `perturb_numeric` is set.
    pub non_entity_slot_types: BTreeSet<String>,
    pub perturb_numeric: bool,
    /// Values left untouched and excluded from the leakage audit.
    pub keep_values: BTreeSet<String>,
}

impl Default for SubstitutionConfig {
    fn default() -> Self {
        let set = |items: &[&str]| items.iter().map(|s| s.to_string()).collect();
        SubstitutionConfig {
            normalization: NormalizationConfig::default(),
            non_entity_slot_types: set(&[
                "leaveat",
                "arriveby",
                "stay",
                "people",
                "day",
                "time",
                "bookday",
                "bookpeople",
                "bookstay",
                "booktime",
            ]),
            perturb_numeric: false,
            keep_values: set(&["dontcare", "none", "not mentioned"]),
        }
    }
}

impl SubstitutionConfig {
    pub fn is_replaceable(&self, lexicon: &ReplacementLexicon, slot: &SlotKey) -> bool {
        let entity = self.perturb_numeric || !self.non_entity_slot_types.contains(&slot.slot_type);
        entity && lexicon.pools.get(slot).is_some_and(|p| p.replaceable)
    }
}

/// Per-dialog `(slot, original) -> replacement` maps.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ReplacementMap {
    pub seed: u64,
    pub dialogs: BTreeMap<String, BTreeMap<(SlotKey, String), String>>,
}

fn dialog_rng(seed: u64, dialog_id: &str) -> ChaCha8Rng {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update(dialog_id.as_bytes());
    ChaCha8Rng::from_seed(hasher.finalize().into())
}

/// Draws replacements for every replaceable value of `test`. Deterministic
/// for a given seed; each dialog gets its own seeded stream.
pub fn build_replacement_map(
    test: &Corpus,
    train: &Corpus,
    lexicon: &ReplacementLexicon,
    config: &SubstitutionConfig,
    seed: u64,
) -> Result<ReplacementMap> {
    let train_vocab = train.vocabulary();
    let empty = BTreeSet::new();
    let seen = |slot: &SlotKey| train_vocab.get(slot).unwrap_or(&empty);

    let per_dialog = par::try_map(test.dialogs(), |dialog| {
        let mut originals: BTreeMap<String, BTreeSet<SlotKey>> = BTreeMap::new();
        for turn in &dialog.turns {
            for t in turn.state.triples() {
                if config.is_replaceable(lexicon, &t.slot) && !config.keep_values.contains(&t.value) {
                    originals.entry(t.value).or_default().insert(t.slot);
                }
            }
        }
        if originals.is_empty() {
            return Ok((dialog.id.clone(), BTreeMap::new()));
        }

        let unseen = |slot: &SlotKey| -> Vec<&String> {
            lexicon.pools[slot]
                .values
                .iter()
                .filter(|v| !seen(slot).contains(*v) && !originals.contains_key(*v))
                .collect()
        };
        let mut per_slot: BTreeMap<&SlotKey, usize> = BTreeMap::new();
        for slots in originals.values() {
            for slot in slots {
                *per_slot.entry(slot).or_default() += 1;
            }
        }
        for (slot, needed) in &per_slot {
            let available = unseen(slot).len();
            if available < *needed {
                return Err(Error::PoolExhausted {
                    dialog: dialog.id.clone(),
                    slot: (*slot).clone(),
                    needed: *needed,
                    available,
                });
            }
        }

        let mut rng = dialog_rng(seed, &dialog.id);
        let mut used: BTreeSet<&String> = BTreeSet::new();
        let mut map = BTreeMap::new();
        for (original, slots) in &originals {
            let candidates: Vec<&String> = slots
                .iter()
                .flat_map(&unseen)
                .collect::<BTreeSet<_>>()
                .into_iter()
                .filter(|v| !used.contains(v) && slots.iter().all(|s| !seen(s).contains(*v)))
                .collect();
            if candidates.is_empty() {
                let slot = slots.first().expect("non-empty").clone();
                return Err(Error::PoolExhausted {
                    dialog: dialog.id.clone(),
                    available: 0,
                    needed: per_slot[&slot],
                    slot,
                });
            }
            let choice = candidates[rng.gen_range(0..candidates.len())];
            used.insert(choice);
            for slot in slots {
                map.insert((slot.clone(), original.clone()), choice.clone());
            }
        }
        Ok((dialog.id.clone(), map))
    })?;

    Ok(ReplacementMap {
        seed,
        dialogs: per_dialog.into_iter().filter(|(_, m)| !m.is_empty()).collect(),
    })
}

impl ReplacementMap {
    /// Swaps originals and replacements.
    pub fn inverse(&self) -> ReplacementMap {
        ReplacementMap {
            seed: self.seed,
            dialogs: self
                .dialogs
                .iter()
                .map(|(id, m)| {
                    let inv = m
                        .iter()
                        .map(|((slot, orig), rep)| ((slot.clone(), rep.clone()), orig.clone()))
                        .collect();
                    (id.clone(), inv)
                })
                .collect(),
        }
    }

    pub fn to_tsv(&self) -> String {
        let mut out = format!("# seed\t{}\ndialog_id\tslot\toriginal\treplacement\n", self.seed);
        for (id, m) in &self.dialogs {
            for ((slot, orig), rep) in m {
                let _ = writeln!(out, "{id}\t{slot}\t{orig}\t{rep}");
            }
        }
        out
    }

    pub fn parse_tsv(text: &str) -> Result<Self> {
        let mut map = ReplacementMap::default();
        for (i, line) in text.lines().enumerate() {
            if let Some(seed) = line.strip_prefix("# seed\t") {
                map.seed = seed
                    .trim()
                    .parse()
                    .map_err(|_| Error::Invalid(format!("map line {}: bad seed", i + 1)))?;
                continue;
            }
            if line.trim().is_empty() || line.starts_with('#') || line.starts_with("dialog_id\t") {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != 4 {
                return Err(Error::Invalid(format!("map line {}: expected 4 columns", i + 1)));
            }
            map.dialogs
                .entry(cols[0].to_string())
                .or_default()
                .insert((cols[1].parse()?, cols[2].to_string()), cols[3].to_string());
        }
        Ok(map)
    }
}

fn shape_like(surface: &str, replacement: &str) -> String {
    let letters: Vec<char> = surface.chars().filter(|c| c.is_alphabetic()).collect();
    if letters.len() > 1 && letters.iter().all(|c| c.is_uppercase()) {
        return replacement.to_uppercase();
    }
    let capitalize = |w: &str| {
        let mut cs = w.chars();
        match cs.next() {
            Some(f) => f.to_uppercase().chain(cs).collect(),
            None => String::new(),
        }
    };
    let words: Vec<&str> = surface.split_whitespace().collect();
    let starts_upper = |w: &&str| w.chars().next().is_some_and(char::is_uppercase);
    if words.len() > 1 && words.iter().all(starts_upper) {
        replacement.split(' ').map(capitalize).collect::<Vec<_>>().join(" ")
    } else if words.first().is_some_and(starts_upper) {
        capitalize(replacement)
    } else {
        replacement.to_string()
    }
}

/// Replaces every token-aligned occurrence of a surface in `text`. Longer
/// surfaces win; equal-length partial overlaps are an error.
fn replace_in_text(
    dialog_id: &str,
    text: &str,
    surfaces: &[(Vec<String>, &str, &str)],
    norm: &NormalizationConfig,
) -> Result<String> {
    let tokens = tokenize(text, norm);
    let mut found: Vec<(usize, usize, usize)> = Vec::new();
    for (i, _) in tokens.iter().enumerate() {
        for (k, (pattern, _, _)) in surfaces.iter().enumerate() {
            let len = pattern.len();
            if i + len <= tokens.len() && tokens[i..i + len].iter().zip(pattern).all(|(t, p)| t.text == *p) {
                found.push((i, len, k));
            }
        }
    }
    found.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    let mut chosen: Vec<(usize, usize, usize)> = Vec::new();
    for m in found {
        let clash = chosen.iter().find(|c| m.0 < c.0 + c.1 && c.0 < m.0 + m.1);
        match clash {
            None => chosen.push(m),
            Some(c) if c.1 == m.1 && c.0 != m.0 => {
                return Err(Error::AmbiguousOverlap {
                    dialog: dialog_id.to_string(),
                    first: surfaces[c.2].1.to_string(),
                    second: surfaces[m.2].1.to_string(),
                    start: tokens[m.0].start,
                });
            }
            Some(_) => {}
        }
    }
    chosen.sort_by_key(|c| c.0);
    let mut out = String::with_capacity(text.len());
    let mut pos = 0;
    for (start, len, k) in chosen {
        let (from, to) = (tokens[start].start, tokens[start + len - 1].end);
        out.push_str(&text[pos..from]);
        out.push_str(&shape_like(&text[from..to], surfaces[k].2));
        pos = to;
    }
    out.push_str(&text[pos..]);
    Ok(out)
}

fn substitute_dialog(
    dialog: &Dialog,
    map: &BTreeMap<(SlotKey, String), String>,
    config: &SubstitutionConfig,
) -> Result<Dialog> {
    let norm = &config.normalization;
    let mut by_text: BTreeMap<String, &str> = BTreeMap::new();
    for ((slot, orig), rep) in map {
        by_text.insert(orig.clone(), rep.as_str());
        for (variant, canonical) in norm.synonyms.variants(slot) {
            if canonical == orig {
                by_text.entry(variant.to_string()).or_insert(rep.as_str());
            }
        }
    }
    let surfaces: Vec<(Vec<String>, &str, &str)> = by_text
        .iter()
        .map(|(text, rep)| {
            let toks = tokenize(text, norm).into_iter().map(|t| t.text).collect();
            (toks, text.as_str(), *rep)
        })
        .filter(|(toks, _, _)| !Vec::is_empty(toks))
        .collect();

    let mut out = dialog.clone();
    for turn in &mut out.turns {
        turn.user = replace_in_text(&dialog.id, &turn.user, &surfaces, norm)?;
        turn.system = replace_in_text(&dialog.id, &turn.system, &surfaces, norm)?;
        turn.state
            .map_values(|slot, value| map.get(&(slot.clone(), value.to_string())).cloned());
    }
    Ok(out)
}

/// Applies the map to the corpus, dialogs in parallel.
pub fn apply_replacements(test: &Corpus, map: &ReplacementMap, config: &SubstitutionConfig) -> Result<Corpus> {
    let dialogs = par::try_map(test.dialogs(), |d| match map.dialogs.get(&d.id) {
        Some(m) => substitute_dialog(d, m, config),
        None => Ok(d.clone()),
    })?;
    Corpus::new(test.split, dialogs)
}

/// Replaceable-slot triples of `new_test` whose value also occurs in `train`.
pub fn leakage_audit(
    new_test: &Corpus,
    train: &Corpus,
    lexicon: &ReplacementLexicon,
    config: &SubstitutionConfig,
) -> Vec<SlotTriple> {
    let train_vocab = train.vocabulary();
    let mut leaks = BTreeSet::new();
    for turn in new_test.dialogs().iter().flat_map(|d| &d.turns) {
        for t in turn.state.triples() {
            if !config.is_replaceable(lexicon, &t.slot) || config.keep_values.contains(&t.value) {
                continue;
            }
            if train_vocab.get(&t.slot).is_some_and(|v| v.contains(&t.value)) {
                leaks.insert(t);
            }
        }
    }
    leaks.into_iter().collect()
}

pub fn render_leakage(leaks: &[SlotTriple]) -> String {
    let mut out = String::from("domain\tslot_type\tvalue\n");
    for t in leaks {
        let _ = writeln!(out, "{}\t{}\t{}", t.slot.domain, t.slot.slot_type, t.value);
    }
    out
}
