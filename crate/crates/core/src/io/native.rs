use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{jsonl_records, multiwoz22, parse_value, read_jsonl, read_to_string, write_file, Format};
use crate::error::{Error, Result};
use crate::model::{
    BeliefState, Corpus, Dialog, DialogTurn, EntityDatabase, Ontology, OntologyEntry, PredictionSet, SlotKey,
    SlotTriple, Split, DEFAULT_CATEGORICAL_CAP,
};

const CORPUS_FORMAT: &str = "dstdoctor-corpus";
const CORPUS_VERSION: u32 = 1;

#[derive(Debug, Clone, Default)]
pub struct LoadOptions {
    pub format: Format,
    /// Overrides the split named in the file header.
    pub split: Option<Split>,
    pub multi_value: bool,
    pub categorical_cap: Option<usize>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
    split: Split,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DialogRecord {
    id: String,
    domains: Vec<String>,
    turns: Vec<TurnRecord>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TurnRecord {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    index: Option<usize>,
    user: String,
    #[serde(default)]
    system: String,
    #[serde(default)]
    state: Vec<String>,
}

pub(crate) fn parse_state(triples: &[String], multi_value: bool) -> Result<BeliefState> {
    let parsed = triples
        .iter()
        .map(|t| SlotTriple::parse(t))
        .collect::<Result<Vec<_>>>()?;
    BeliefState::from_triples(parsed, multi_value)
}

fn state_strings(state: &BeliefState) -> Vec<String> {
    state.triples().iter().map(ToString::to_string).collect()
}

fn dialog_from_record(rec: DialogRecord, multi_value: bool) -> Result<Dialog> {
    let mut turns = Vec::with_capacity(rec.turns.len());
    for (pos, t) in rec.turns.into_iter().enumerate() {
        let index = t.index.unwrap_or(pos);
        let state = parse_state(&t.state, multi_value).map_err(|e| Error::TurnInvariant {
            dialog: rec.id.clone(),
            turn: index,
            message: e.to_string(),
        })?;
        turns.push(DialogTurn {
            index,
            user: t.user,
            system: t.system,
            state,
        });
    }
    Ok(Dialog {
        id: rec.id,
        domains: rec.domains.into_iter().collect(),
        turns,
    })
}

/// Loads and validates a corpus. Dialogs are sorted by id; triple values are
/// normalized while utterances are kept verbatim.
pub fn load_corpus(path: &Path, options: &LoadOptions) -> Result<Corpus> {
    match options.format {
        Format::Native => load_native_corpus(path, options),
        Format::MultiWoz22 => {
            let dialogs = multiwoz22::load_dialogs(path, options.multi_value)?;
            let split = options.split.unwrap_or_else(|| split_from_path(path));
            Corpus::new(split, dialogs)
        }
    }
}

fn split_from_path(path: &Path) -> Split {
    let name = path.to_string_lossy().to_lowercase();
    if name.contains("train") {
        Split::Train
    } else if name.contains("dev") || name.contains("val") {
        Split::Valid
    } else {
        Split::Test
    }
}

fn load_native_corpus(path: &Path, options: &LoadOptions) -> Result<Corpus> {
    let text = read_to_string(path)?;
    let mut records = jsonl_records(path, &text)?.into_iter().peekable();
    let mut split = None;
    if let Some((line, value)) = records.peek() {
        if value.get("format").is_some() {
            let header: Header = parse_value(path, *line, value.clone())?;
            if header.format != CORPUS_FORMAT || header.version != CORPUS_VERSION {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: *line,
                    column: 1,
                    message: format!("unsupported header {}/{}", header.format, header.version),
                });
            }
            split = Some(header.split);
            records.next();
        }
    }
    let mut dialogs = Vec::new();
    for (line, value) in records {
        let rec: DialogRecord = parse_value(path, line, value)?;
        dialogs.push(dialog_from_record(rec, options.multi_value)?);
    }
    let split = options.split.or(split).unwrap_or(Split::Test);
    Corpus::new(split, dialogs)
}

/// Renders a corpus in the native format. Output depends only on the
/// corpus value.
pub fn corpus_to_string(corpus: &Corpus) -> String {
    let header = Header {
        format: CORPUS_FORMAT.into(),
        version: CORPUS_VERSION,
        split: corpus.split,
    };
    let mut out = serde_json::to_string(&header).expect("header serializes");
    out.push('\n');
    for dialog in corpus.dialogs() {
        let rec = DialogRecord {
            id: dialog.id.clone(),
            domains: dialog.domains.iter().cloned().collect(),
            turns: dialog
                .turns
                .iter()
                .map(|t| TurnRecord {
                    index: None,
                    user: t.user.clone(),
                    system: t.system.clone(),
                    state: state_strings(&t.state),
                })
                .collect(),
        };
        out.push_str(&serde_json::to_string(&rec).expect("dialog serializes"));
        out.push('\n');
    }
    out
}

pub fn write_corpus(corpus: &Corpus, path: &Path) -> Result<()> {
    write_file(path, &corpus_to_string(corpus))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct OntologyRecord {
    slot: SlotKey,
    #[serde(default)]
    categorical: bool,
    #[serde(default)]
    values: Vec<String>,
}

pub fn load_ontology(path: &Path, options: &LoadOptions) -> Result<Ontology> {
    let cap = options.categorical_cap.unwrap_or(DEFAULT_CATEGORICAL_CAP);
    let entries = match options.format {
        Format::Native => read_jsonl::<OntologyRecord>(path)?
            .into_iter()
            .map(|r| {
                (
                    r.slot,
                    OntologyEntry {
                        values: r.values.into_iter().collect(),
                        categorical: r.categorical,
                    },
                )
            })
            .collect(),
        Format::MultiWoz22 => multiwoz22::load_schema(path)?,
    };
    Ontology::new(entries, cap)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct DatabaseRecord {
    domain: String,
    record: BTreeMap<String, serde_json::Value>,
}

pub(crate) fn scalar_fields(record: BTreeMap<String, serde_json::Value>) -> BTreeMap<String, String> {
    record
        .into_iter()
        .filter_map(|(k, v)| match v {
            serde_json::Value::String(s) => Some((k, s)),
            serde_json::Value::Number(n) => Some((k, n.to_string())),
            serde_json::Value::Bool(b) => Some((k, b.to_string())),
            _ => None,
        })
        .collect()
}

/// Loads entity records. Ontology mismatches are not errors here; see
/// [`EntityDatabase::mismatches`].
pub fn load_database(path: &Path, options: &LoadOptions) -> Result<EntityDatabase> {
    match options.format {
        Format::Native => {
            let mut db = EntityDatabase::default();
            for rec in read_jsonl::<DatabaseRecord>(path)? {
                db.records
                    .entry(rec.domain)
                    .or_default()
                    .push(scalar_fields(rec.record));
            }
            Ok(db)
        }
        Format::MultiWoz22 => multiwoz22::load_database(path),
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PredictionRecord {
    dialog_id: String,
    turn: usize,
    state: Vec<String>,
}

/// Loads predictions and checks them against the gold corpus and, when
/// given, the ontology's slot set.
pub fn load_predictions(path: &Path, gold: &Corpus, ontology: Option<&Ontology>) -> Result<PredictionSet> {
    let text = read_to_string(path)?;
    let mut set = PredictionSet::default();
    for (line, value) in jsonl_records(path, &text)? {
        let rec: PredictionRecord = parse_value(path, line, value)?;
        let state = parse_state(&rec.state, true).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line,
            column: 1,
            message: e.to_string(),
        })?;
        if let Some(ontology) = ontology {
            if let Some(slot) = state.slots().find(|s| !ontology.contains(s)) {
                return Err(Error::UnknownSlot(slot.clone()));
            }
        }
        let key = (rec.dialog_id, rec.turn);
        if set.entries.contains_key(&key) {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line,
                column: 1,
                message: format!("duplicate prediction for `{}` turn {}", key.0, key.1),
            });
        }
        set.entries.insert(key, state);
    }
    set.check_against(gold)?;
    Ok(set)
}

pub fn write_predictions(predictions: &PredictionSet, path: &Path) -> Result<()> {
    let mut out = String::new();
    for ((dialog_id, turn), state) in &predictions.entries {
        let rec = PredictionRecord {
            dialog_id: dialog_id.clone(),
            turn: *turn,
            state: state_strings(state),
        };
        out.push_str(&serde_json::to_string(&rec).expect("prediction serializes"));
        out.push('\n');
    }
    write_file(path, &out)
}
