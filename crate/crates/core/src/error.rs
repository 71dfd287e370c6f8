use std::path::PathBuf;

use thiserror::Error;

use crate::measures::TransportPlan;

/// Errors produced by the solvers, estimators and data loaders.
#[derive(Debug, Error)]
pub enum Error {
    #[error("empty input: {0}")]
    EmptyInput(String),

    /// A CSV row had a different number of fields than the first row.
    #[error("row {row}: expected {expected} fields, found {found}")]
    Format {
        row: usize,
        expected: usize,
        found: usize,
    },

    /// A coordinate could not be parsed as a real number.
    #[error("row {row}, column {column}: cannot parse {token:?} as a number")]
    Parse {
        row: usize,
        column: usize,
        token: String,
    },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),

    #[error("invalid measure: {0}")]
    InvalidMeasure(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// The exact solver refuses instances above its size cap.
    #[error("exact solver capacity exceeded: {entries} cost entries > cap {cap}; use the Sinkhorn solver instead")]
    Capacity { entries: usize, cap: usize },

    /// Sinkhorn scaling hit its iteration cap; carries the last iterate.
    #[error(
        "sinkhorn did not converge in {iterations} iterations (marginal violation {violation:.3e})"
    )]
    SinkhornNotConverged {
        iterations: usize,
        violation: f64,
        last: Box<TransportPlan>,
    },

    /// The barycenter plan projection (both legs) hit its iteration cap.
    #[error("plan update did not converge in {iterations} iterations (marginal violation {violation:.3e})")]
    PlansNotConverged { iterations: usize, violation: f64 },

    #[error("outer iteration {iteration}: {source}")]
    OuterIteration {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("k-means needs k <= number of distinct points (k = {k}, distinct = {distinct})")]
    TooFewPoints { k: usize, distinct: usize },

    #[error("internal consistency check failed: {0}")]
    Consistency(String),

    #[error("missing labels: {0}")]
    MissingLabels(String),
}

pub type Result<T> = std::result::Result<T, Error>;
