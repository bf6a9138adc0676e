//! Synthetic populations with known outcome probabilities, used to drive
//! oracle models through the full evaluation pipeline.

mod generate;
mod spec;

pub use generate::{
    generate_population, oracle_probabilities, true_probability, write_ground_truth,
    ConditionalProbability, GroundTruthRecord, SyntheticPopulation,
};
pub use spec::{
    sigmoid, FeatureDist, FeatureSpec, LogitTerm, ProbabilityRule, SyntheticSpec, SYNTH_TARGET,
};

use thiserror::Error;

use crate::tabular::DataError;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("synthetic spec error: {0}")]
    Spec(String),
    #[error("malformed synthetic spec: {0}")]
    Toml(#[from] toml::de::Error),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = SynthError> = std::result::Result<T, E>;
