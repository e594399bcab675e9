//! Trajectory metrics, dataset ingestion and condition summaries.

pub mod dataset;
pub mod metrics;
pub mod stats;
pub mod summary;

use thiserror::Error;

pub use dataset::{ingest_dataset, DatasetSchema, DelimitedSchema, IngestReport, ParseWarning};
pub use metrics::{path_length, pct_in_critical, trial_metrics, CriticalRegion, Trajectory, TrialMetrics};
pub use stats::{describe, permutation_test, Describe};
pub use summary::{summarize, Factor, FactorDifference, GroupSummary, Metric, MetricsReport};

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("need at least 2 samples, got {0}")]
    TooFewSamples(usize),
    #[error("path has zero length")]
    ZeroLengthPath,
    #[error("{file}:{line}: schema mismatch: {message}")]
    SchemaMismatch { file: String, line: usize, message: String },
    #[error("{0}: no samples")]
    EmptyFile(String),
    #[error("schema file: {0}")]
    SchemaConfig(String),
    #[error("{0}: {1}")]
    Io(String, #[source] std::io::Error),
    #[error("no record has a computable metric")]
    NoUsableRecords,
}
