//! Census person records: loading, task definitions, population filters,
//! target binarization, and reproducible splits.

mod dataset;
mod io;
mod sampling;
mod schema;
mod task;

pub use dataset::{LineageStep, Partition, RowView, TabularDataset, Value};
pub use io::load_person_csv;
pub use sampling::{
    group_values, replay_lineage, split_dataset, split_partition, subsample, unit_hash, Group,
    GroupAssignment, SplitSpec,
};
pub use schema::{acs_column_kind, acs_schema, ColumnKind, ColumnSchema};
pub use task::{
    apply_population_filter, binarize_target, filter_rows, BinarizationRule, CompareOp,
    Predicate, TaskDefinition, BUNDLED_TASK_IDS,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("schema error: column `{column}` is missing")]
    MissingColumn { column: String },
    #[error("schema error: duplicate column `{column}`")]
    DuplicateColumn { column: String },
    #[error("row {row}: cannot parse `{value}` in column `{column}`")]
    Parse {
        row: usize,
        column: String,
        value: String,
    },
    #[error("row {row_id}: target column `{column}` is missing")]
    MissingTarget { row_id: u64, column: String },
    #[error("requested {requested} rows but only {available} are available")]
    Size { requested: usize, available: usize },
    #[error("column `{column}` is not categorical")]
    NotCategorical { column: String },
    #[error("invalid split: {0}")]
    InvalidSplit(String),
    #[error("invalid task definition: {0}")]
    InvalidTask(String),
    #[error("unknown task `{0}`")]
    UnknownTask(String),
    #[error("no CSV files found under {0}")]
    NoInput(String),
    #[error("malformed task config: {0}")]
    Config(#[from] toml::de::Error),
    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = DataError> = std::result::Result<T, E>;
