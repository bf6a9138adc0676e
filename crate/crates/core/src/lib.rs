//! Evaluation harness for language-model risk scores on census prediction
//! tasks.

pub mod tabular;
pub mod encoding;
pub mod transport;
pub mod scoring;
pub mod metrics;
pub mod synth;
pub mod benchmark;
