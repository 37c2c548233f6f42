//! Diversity, agreement, detection scoring and topic modelling.

pub mod agreement;
pub mod detection;
pub mod diversity;
pub mod lda;
pub mod segment;

use thiserror::Error;

pub use agreement::{aggregate_likert, fleiss_kappa, majority_vote, RatingMatrix, Vote};
pub use detection::{score_predictions, score_turns, LabelBlock, LabelReport, LabelRow, TurnPair};
pub use diversity::{distinct_n, diversity_rows, DiversityRow, GenerationMode};
pub use lda::{lda_fit, lda_fit_observed, lda_top_tokens, LdaParams, TopicModel};
pub use segment::{segment, CharSegmenter, Segmenter, TokenSequence, WhitespaceSegmenter};

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("n-gram order must be at least 1")]
    ZeroOrder,
    #[error("corpus has no {n}-grams")]
    NoNgrams { n: usize },
    #[error("invalid rating matrix: {0}")]
    InvalidMatrix(String),
    #[error("chance agreement is 1; kappa is undefined")]
    DegenerateAgreement,
    #[error("no ratings")]
    NoRatings,
    #[error("Likert score {0} outside 1..5")]
    LikertOutOfRange(u8),
    #[error("gold and predicted keys differ: {0}")]
    KeyMismatch(String),
    #[error("no language known for dialogue {0}")]
    UnknownDialogue(String),
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("empty vocabulary")]
    EmptyVocabulary,
    #[error("topic count must be at least 1")]
    ZeroTopics,
}
