//! Adapter for MultiWOZ 2.2 style files.
//!
//! Dialog files are JSON arrays of dialogs whose turns alternate `USER` and
//! `SYSTEM` speakers; user turns carry `frames[].state.slot_values` maps keyed
//! `domain-slot`. A directory argument loads every `*.json` file in it except
//! `schema.json`.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use super::native::scalar_fields;
use super::read_to_string;
use crate::error::{Error, Result};
use crate::model::{BeliefState, Dialog, DialogTurn, EntityDatabase, OntologyEntry, SlotKey, SlotTriple};

#[derive(Deserialize)]
struct MwDialog {
    dialogue_id: String,
    #[serde(default)]
    services: Vec<String>,
    turns: Vec<MwTurn>,
}

#[derive(Deserialize)]
struct MwTurn {
    speaker: String,
    utterance: String,
    #[serde(default)]
    frames: Vec<MwFrame>,
}

#[derive(Deserialize)]
struct MwFrame {
    #[serde(default)]
    state: Option<MwState>,
}

#[derive(Deserialize)]
struct MwState {
    #[serde(default)]
    slot_values: BTreeMap<String, Vec<String>>,
}

fn parse_json<T: serde::de::DeserializeOwned>(path: &Path, text: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })
}

fn json_files(path: &Path, skip: impl Fn(&str) -> bool) -> Result<Vec<PathBuf>> {
    if !path.is_dir() {
        return Ok(vec![path.to_path_buf()]);
    }
    let mut files = Vec::new();
    for entry in fs::read_dir(path).map_err(|e| Error::io(path, e))? {
        let p = entry.map_err(|e| Error::io(path, e))?.path();
        let name = p.file_name().and_then(|n| n.to_str()).unwrap_or_default();
        if name.ends_with(".json") && !skip(name) {
            files.push(p);
        }
    }
    files.sort();
    Ok(files)
}

pub(crate) fn split_slot_name(name: &str) -> Result<SlotKey> {
    let (domain, slot) = name
        .split_once('-')
        .ok_or_else(|| Error::Invalid(format!("slot `{name}` is not of the form domain-slot")))?;
    SlotKey::new(domain.to_lowercase(), slot.to_lowercase().replace(' ', ""))
}

pub(super) fn load_dialogs(path: &Path, multi_value: bool) -> Result<Vec<Dialog>> {
    let mut dialogs = Vec::new();
    for file in json_files(path, |n| n == "schema.json")? {
        let text = read_to_string(&file)?;
        let parsed: Vec<MwDialog> = if text.trim_start().starts_with('[') {
            parse_json(&file, &text)?
        } else {
            vec![parse_json(&file, &text)?]
        };
        for d in parsed {
            dialogs.push(convert(d, multi_value)?);
        }
    }
    Ok(dialogs)
}

fn convert(d: MwDialog, multi_value: bool) -> Result<Dialog> {
    let mut turns = Vec::new();
    let mut domains: BTreeSet<String> = d.services.iter().map(|s| s.to_lowercase()).collect();
    let mut iter = d.turns.into_iter().peekable();
    while let Some(turn) = iter.next() {
        if !turn.speaker.eq_ignore_ascii_case("user") {
            continue;
        }
        let system = match iter.peek() {
            Some(next) if next.speaker.eq_ignore_ascii_case("system") => {
                iter.next().map(|t| t.utterance).unwrap_or_default()
            }
            _ => String::new(),
        };
        let index = turns.len();
        let fail = |e: Error| Error::TurnInvariant {
            dialog: d.dialogue_id.clone(),
            turn: index,
            message: e.to_string(),
        };
        let mut triples = Vec::new();
        for frame in &turn.frames {
            let Some(state) = &frame.state else { continue };
            for (name, values) in &state.slot_values {
                let slot = split_slot_name(name).map_err(fail)?;
                let take = if multi_value { values.len() } else { values.len().min(1) };
                if values.len() > take {
                    log::debug!(
                        "{}: turn {index}: keeping first of {} values for {slot}",
                        d.dialogue_id,
                        values.len()
                    );
                }
                for v in &values[..take] {
                    triples.push(SlotTriple::new(slot.clone(), v).map_err(fail)?);
                }
            }
        }
        for t in &triples {
            domains.insert(t.slot.domain.clone());
        }
        let state = BeliefState::from_triples(triples, multi_value).map_err(fail)?;
        turns.push(DialogTurn {
            index,
            user: turn.utterance,
            system,
            state,
        });
    }
    Ok(Dialog {
        id: d.dialogue_id,
        domains,
        turns,
    })
}

#[derive(Deserialize)]
struct MwService {
    #[serde(default)]
    slots: Vec<MwSlot>,
}

#[derive(Deserialize)]
struct MwSlot {
    name: String,
    #[serde(default)]
    is_categorical: bool,
    #[serde(default)]
    possible_values: Vec<String>,
}

pub(super) fn load_schema(path: &Path) -> Result<Vec<(SlotKey, OntologyEntry)>> {
    let text = read_to_string(path)?;
    let services: Vec<MwService> = parse_json(path, &text)?;
    let mut out = Vec::new();
    for slot in services.into_iter().flat_map(|s| s.slots) {
        out.push((
            split_slot_name(&slot.name)?,
            OntologyEntry {
                values: slot.possible_values.into_iter().collect(),
                categorical: slot.is_categorical,
            },
        ));
    }
    Ok(out)
}

/// Loads `<domain>_db.json` files (JSON arrays of records) from a directory
/// or a single file.
pub(super) fn load_database(path: &Path) -> Result<EntityDatabase> {
    let mut db = EntityDatabase::default();
    for file in json_files(path, |n| !n.ends_with("_db.json"))? {
        let stem = file.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
        let domain = stem.strip_suffix("_db").unwrap_or(stem).to_lowercase();
        let text = read_to_string(&file)?;
        let records: Vec<BTreeMap<String, serde_json::Value>> = parse_json(&file, &text)?;
        db.records
            .entry(domain)
            .or_default()
            .extend(records.into_iter().map(scalar_fields));
    }
    Ok(db)
}
