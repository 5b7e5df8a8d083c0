use std::path::PathBuf;

use thiserror::Error;

use crate::types::PartitionViolation;

pub type Result<T> = std::result::Result<T, ColupiError>;

#[derive(Debug, Error)]
pub enum ColupiError {
    #[error("invalid partition matrix: {0}")]
    InvalidPartition(#[from] PartitionViolation),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("collaboration needs at least 2 sites, got {0}")]
    TooFewSites(usize),

    #[error("need at least {k} observations to fit {k} clusters, got {n}")]
    TooFewObservations { n: usize, k: usize },

    #[error("cannot split {features} features across {sites} sites")]
    TooFewFeatures { features: usize, sites: usize },

    #[error("{path}: row {row}, column {col}: cannot parse {cell:?} as a number")]
    NonNumericCell {
        path: PathBuf,
        row: usize,
        col: usize,
        cell: String,
    },

    #[error("{path}: row {row} has {found} fields, expected {expected}")]
    RaggedRow {
        path: PathBuf,
        row: usize,
        found: usize,
        expected: usize,
    },

    #[error("{0}: file contains no data rows")]
    EmptyFile(PathBuf),

    #[error("could not place {components} means at pairwise distance {separation} after {attempts} attempts")]
    Placement {
        components: usize,
        separation: f64,
        attempts: usize,
    },

    #[error("statistics: {0}")]
    Stats(String),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl ColupiError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        ColupiError::Io {
            path: path.into(),
            source,
        }
    }
}
