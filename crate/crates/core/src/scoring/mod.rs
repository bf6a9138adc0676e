//! Reading risk scores out of next-token distributions, and thresholding
//! them into class predictions.

mod extract;
mod records;
mod threshold;

pub use extract::{
    choice_probabilities, choice_variants, mc_score, mc_score_single_order, numeric_score,
    numeric_second_pass_prompt, top_digit, ChoiceProbabilities, Extraction, ScoreFlag,
};
pub use records::{read_scored_records, scored_records_csv, write_scored_records, ScoredRecord};
pub use threshold::{fit_threshold, threshold_predict, ThresholdPolicy};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ScoreError {
    #[error("extraction error: neither choice token is in the top-k distribution")]
    NoChoiceTokens,
    #[error("extraction error: no digit token in the first-pass top-k distribution")]
    NoDigit,
    #[error("extraction error: every choice ordering failed")]
    AllOrderingsFailed,
    #[error("prompt bundle has scheme {found}, expected {expected}")]
    WrongScheme { expected: &'static str, found: &'static str },
    #[error("degenerate data: {0}")]
    Degenerate(String),
    #[error("threshold {0} is outside [0, 1]")]
    InvalidThreshold(f64),
    #[error("scored records line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = ScoreError> = std::result::Result<T, E>;
