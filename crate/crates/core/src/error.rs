use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the library. Messages are stable: the CLI prints them
/// verbatim and tests match on the variants.
#[derive(Debug, Error)]
pub enum Error {
    #[error("resolution too coarse: {0}")]
    ResolutionTooCoarse(String),
    #[error("empty mask")]
    EmptyMask,
    #[error("degenerate polygon: {0} vertices")]
    DegeneratePolygon(usize),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("field does not match its domain: {0}")]
    FieldMismatch(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {reason}")]
    Image { path: PathBuf, reason: String },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("zero field")]
    ZeroField,
    #[error("empty set")]
    EmptySet,
    #[error("collapsed chamber {0}")]
    CollapsedChamber(usize),
    #[error("no sign change")]
    NoSignChange,
    #[error("overlapping supports")]
    OverlappingSupports,
    #[error("no feasible minimizer found (raise restarts or resolution)")]
    NoFeasibleMinimizer,
    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),
    #[error("domain too small for {0} balls")]
    DomainTooSmall(usize),
    #[error("empty level range: {0}")]
    EmptyLevelRange(String),
    #[error("degenerate component {0}")]
    DegenerateComponent(usize),
    #[error("oracle limit: {0} mask pixels (at most {max})", max = crate::oracle::MAX_ORACLE_PIXELS)]
    OracleLimit(usize),
}

pub type Result<T> = std::result::Result<T, Error>;
