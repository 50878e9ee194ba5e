//! DST scoring: exact and fuzzy joint goal accuracy, slot accuracy and
//! per-slot error-turn tables.

mod score;
mod similarity;

pub use score::{
    compare_evals, evaluate, evaluate_detailed, render_delta, render_per_slot, render_per_turn, render_summary,
    score_turn, EvalConfig, EvalDelta, EvalResult, SlotDelta, SlotErrors, SlotOutcome, TurnScore,
};
pub use similarity::{similarity, similarity_normalized, FuzzyMode};
