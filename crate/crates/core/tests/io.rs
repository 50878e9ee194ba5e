mod common;

use std::fs;

use dstdoctor::io::{self, Format, LoadOptions};
use dstdoctor::{SlotKey, Split};

#[test]
fn native_round_trip_is_stable() {
    let (corpus, _, _) = common::seeded_corpus();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("test.jsonl");
    io::write_corpus(&corpus, &path).unwrap();
    let loaded = io::load_corpus(&path, &LoadOptions::default()).unwrap();
    assert_eq!(loaded.split, Split::Test);
    assert_eq!(loaded.len(), corpus.len());
    let first = fs::read_to_string(&path).unwrap();
    assert_eq!(io::corpus_to_string(&loaded), first);
    io::write_corpus(&loaded, &path).unwrap();
    assert_eq!(fs::read_to_string(&path).unwrap(), first);
}

const DIALOG: &str = r#"{"dialogue_id": "PMUL0001.json", "services": ["hotel"], "turns": [
  {"speaker": "USER", "turn_id": "0", "utterance": "A guesthouse for 2 or 3 people.", "frames": [
    {"service": "hotel", "state": {"active_intent": "find_hotel", "slot_values": {"hotel-type": ["guesthouse", "guest house"], "hotel-book people": ["2", "3"]}}}]},
  {"speaker": "SYSTEM", "turn_id": "1", "utterance": "Sure.", "frames": []},
  {"speaker": "USER", "turn_id": "2", "utterance": "Thanks.", "frames": [
    {"service": "hotel", "state": {"active_intent": "find_hotel", "slot_values": {"hotel-type": ["guesthouse"]}}}]}
]}"#;

fn load(multi_value: bool) -> dstdoctor::Corpus {
    let dir = tempfile::tempdir().unwrap();
    let split = dir.path().join("dev");
    fs::create_dir_all(&split).unwrap();
    fs::write(split.join("dialogues_001.json"), format!("[{DIALOG}]")).unwrap();
    let opts = LoadOptions {
        format: Format::MultiWoz22,
        multi_value,
        ..LoadOptions::default()
    };
    io::load_corpus(&split, &opts).unwrap()
}

#[test]
fn multiwoz22_flattens_turn_pairs_and_slot_names() {
    let corpus = load(false);
    assert_eq!(corpus.split, Split::Valid);
    let d = &corpus.dialogs()[0];
    assert_eq!(d.turns.len(), 2);
    assert_eq!(d.turns[0].user, "A guesthouse for 2 or 3 people.");
    assert_eq!(d.turns[0].system, "Sure.");
    assert_eq!(d.turns[1].system, "");
    let people: SlotKey = "hotel.bookpeople".parse().unwrap();
    let kind: SlotKey = "hotel.type".parse().unwrap();
    assert_eq!(d.turns[0].state.get(&people), Some("2"));
    assert_eq!(d.turns[0].state.get(&kind), Some("guesthouse"));
    assert!(d.turns[0].state.alternatives(&kind).is_empty());
    assert_eq!(d.turns[1].state.get(&people), None);
}

#[test]
fn multiwoz22_multi_value_keeps_alternatives() {
    let corpus = load(true);
    let d = &corpus.dialogs()[0];
    let kind: SlotKey = "hotel.type".parse().unwrap();
    assert_eq!(d.turns[0].state.get(&kind), Some("guesthouse"));
    assert_eq!(d.turns[0].state.alternatives(&kind), ["guest house".to_string()]);
}
