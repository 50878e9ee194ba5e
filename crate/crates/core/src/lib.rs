//! Corpus-quality tooling for slot-annotated task-oriented dialog datasets.
//!
//! - [`consistency`] finds turns where a value was mentioned or accepted but
//!   never annotated, and applies the corrections.
//! - [`bias`] scores how skewed each slot's value distribution is.
//! - [`substitute`] builds unseen-entity test sets.
//! - [`eval`] scores DST predictions with exact and fuzzy joint goal accuracy.
//!
//! Heavy loops run through [`par`], which uses rayon when the `parallel`
//! feature is enabled and plain iterators otherwise.

pub mod bias;
pub mod canonicalize;
pub mod consistency;
pub mod error;
pub mod eval;
pub mod io;
pub mod model;
pub mod par;
pub mod substitute;

pub use error::{Error, Result};
pub use model::{
    BeliefState, Corpus, Dialog, DialogTurn, EntityDatabase, Ontology, OntologyEntry, PredictionSet, SlotKey,
    SlotTriple, Split,
};
