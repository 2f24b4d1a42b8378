//! Exhaustive search over groupings and type assignments.

mod engine;
mod score;
mod space;

pub use engine::{
    data_digest, estimate_from_candidate, fnv1a64, search, search_with_progress, Progress,
    ResultEntry, ScoredCandidate, SearchResult, SearchedSpace,
};
pub use score::{score_candidate, score_candidate_case1, score_candidate_paper, ScoreContext};
pub use space::{
    candidate_count, enumerate_candidates, orbit_count, type_letter, Candidate, CandidateSpace,
    Scorer, SearchConfig, SearchMode,
};
