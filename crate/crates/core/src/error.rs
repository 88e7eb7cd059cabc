use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    /// A value lies outside the support of the distribution it is scored under.
    #[error("value {value} outside support of {dist}")]
    Support { value: String, dist: String },

    #[error("program error at {address}: {message}")]
    Program { address: String, message: String },

    #[error("runaway execution: trace exceeded {limit} entries")]
    Runaway { limit: usize },

    #[error("duplicate address {0} within one trace")]
    DuplicateAddress(String),

    #[error("inference error: {0}")]
    Inference(String),

    #[error("degenerate weights: {0}")]
    Degenerate(String),

    #[error("coverage error: {0}")]
    Coverage(String),

    #[error("schema conflict at {address}: registered as {registered}, found {found}")]
    SchemaConflict {
        address: String,
        registered: String,
        found: String,
    },

    #[error("non-finite {what} in {location}")]
    NonFinite { what: String, location: String },

    #[error("unsupported format version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },

    #[error("malformed data: {0}")]
    Malformed(String),

    #[error("solver error at step {step}: {message}")]
    Solver { step: usize, message: String },

    #[error("query error: {0}")]
    Query(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Short stable identifier used in machine-readable error reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Config(_) => "config",
            Error::InvalidDistribution(_) => "invalid_distribution",
            Error::Support { .. } => "support",
            Error::Program { .. } => "program",
            Error::Runaway { .. } => "runaway",
            Error::DuplicateAddress(_) => "duplicate_address",
            Error::Inference(_) => "inference",
            Error::Degenerate(_) => "degenerate",
            Error::Coverage(_) => "coverage",
            Error::SchemaConflict { .. } => "schema_conflict",
            Error::NonFinite { .. } => "non_finite",
            Error::Version { .. } => "version",
            Error::Malformed(_) => "malformed",
            Error::Solver { .. } => "solver",
            Error::Query(_) => "query",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }
}
