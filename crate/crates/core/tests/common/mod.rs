#![allow(dead_code)]

use std::collections::BTreeSet;

use dstdoctor::{BeliefState, Corpus, Dialog, DialogTurn, Ontology, OntologyEntry, SlotTriple, Split};

pub const AREAS: [&str; 5] = ["centre", "north", "south", "east", "west"];
pub const PRICES: [&str; 3] = ["cheap", "moderate", "expensive"];
pub const NAME_STEMS: [&str; 60] = [
    "acorn", "alder", "aspen", "bramble", "briar", "cedar", "clover", "copper", "cypress", "daisy", "elm", "fern",
    "finch", "foxglove", "garnet", "hawthorn", "hazel", "heron", "holly", "ivy", "juniper", "kestrel", "larch",
    "laurel", "lilac", "linden", "magpie", "maple", "marigold", "meadow", "myrtle", "nettle", "oak", "orchid",
    "osprey", "pebble", "pine", "poppy", "quince", "raven", "rowan", "saffron", "sage", "sorrel", "sparrow", "spruce",
    "swallow", "tansy", "teal", "thistle", "thrush", "tulip", "violet", "walnut", "willow", "wren", "yarrow", "yew",
    "zinnia", "amber",
];

pub fn name(i: usize) -> String {
    format!("{} lodge", NAME_STEMS[i % NAME_STEMS.len()])
}

pub fn state(triples: &[String]) -> BeliefState {
    BeliefState::from_triples(triples.iter().map(|t| SlotTriple::parse(t).unwrap()), false).unwrap()
}

pub fn hotel_ontology() -> Ontology {
    let entry = |values: Vec<String>, categorical| OntologyEntry {
        values: values.into_iter().collect(),
        categorical,
    };
    Ontology::new(
        [
            (
                "hotel.area".parse().unwrap(),
                entry(AREAS.map(String::from).to_vec(), true),
            ),
            (
                "hotel.pricerange".parse().unwrap(),
                entry(PRICES.map(String::from).to_vec(), true),
            ),
            (
                "hotel.name".parse().unwrap(),
                entry((0..NAME_STEMS.len()).map(name).collect(), false),
            ),
        ],
        50,
    )
    .unwrap()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Seed {
    Clean,
    /// The acknowledged system offer of a name is not annotated.
    SystemName,
    /// The user's price range is not annotated.
    UserPrice,
}

/// Two-turn hotel dialog: the user asks for a price range and area, the
/// system offers a name, the user accepts and asks for the phone number.
pub fn hotel_dialog(id: &str, i: usize, seed: Seed) -> Dialog {
    let (area, price, name) = (AREAS[i % 5], PRICES[i % 3], name(i));
    let mut s0 = vec![format!("hotel.area={area}")];
    if seed != Seed::UserPrice {
        s0.push(format!("hotel.pricerange={price}"));
    }
    let mut s1 = s0.clone();
    if seed != Seed::SystemName {
        s1.push(format!("hotel.name={name}"));
    }
    let title: String = name
        .split(' ')
        .map(|w| {
            let mut c = w.chars();
            c.next().unwrap().to_uppercase().chain(c).collect::<String>()
        })
        .collect::<Vec<_>>()
        .join(" ");
    Dialog {
        id: id.to_string(),
        domains: ["hotel".to_string()].into(),
        turns: vec![
            DialogTurn {
                index: 0,
                user: format!("I need a {price} hotel in the {area}."),
                system: format!("{title} is a {price} hotel in the {area}. Shall I book it?"),
                state: state(&s0),
            },
            DialogTurn {
                index: 1,
                user: "Yes, what is the phone number?".to_string(),
                system: String::new(),
                state: state(&s1),
            },
        ],
    }
}

/// 50 dialogs; the returned sets list the seeded system- and user-side ids.
pub fn seeded_corpus() -> (Corpus, BTreeSet<String>, BTreeSet<String>) {
    let mut dialogs = Vec::new();
    let mut system = BTreeSet::new();
    let mut user = BTreeSet::new();
    for i in 0..50 {
        let id = format!("SYN{i:03}.json");
        let seed = match i {
            _ if i % 3 == 1 && system.len() < 11 => Seed::SystemName,
            _ if i % 3 == 2 && user.len() < 6 => Seed::UserPrice,
            _ => Seed::Clean,
        };
        match seed {
            Seed::SystemName => system.insert(id.clone()),
            Seed::UserPrice => user.insert(id.clone()),
            Seed::Clean => false,
        };
        dialogs.push(hotel_dialog(&id, i, seed));
    }
    (Corpus::new(Split::Test, dialogs).unwrap(), system, user)
}
