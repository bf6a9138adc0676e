//! Natural-text rendering of census rows and prompt assembly.

pub(crate) mod codebook;
mod prompt;

pub use codebook::{encode_value, format_currency, CodebookConfig, ColumnToText, DEFAULT_PREAMBLE};
pub use prompt::{
    build_multiple_choice_prompt, build_numeric_prompt, encode_row, ChoiceOrdering, PromptBundle,
    Scheme, INFO_HEADER, NUMERIC_ANSWER_LINE, NUMERIC_ANSWER_PREFIX,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum EncodeError {
    #[error("codebook error: column `{column}` has no mapping for code {code}")]
    UnmappedCode { column: String, code: String },
    #[error("codebook error: no mapping for column `{column}`")]
    MissingMapping { column: String },
    #[error("column `{column}` is not in the dataset")]
    MissingColumn { column: String },
    #[error("codebook error: {0}")]
    Codebook(String),
    #[error("malformed codebook document: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = EncodeError> = std::result::Result<T, E>;
