use thiserror::Error;

/// Errors surfaced by the voting math, solvers, and the experiment harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("enumeration too large; use DP variant (N={n}, limit {limit})")]
    EnumerationTooLarge { n: usize, limit: usize },

    #[error("exact solve limit exceeded (N={n}, limit {limit})")]
    ExactSolveLimit { n: usize, limit: usize },

    #[error("degenerate gap")]
    DegenerateGap,

    #[error("degenerate competency p={0}")]
    DegenerateCompetency(f64),

    #[error("empty committee")]
    EmptyCommittee,

    #[error("committees overlap on expert {0}")]
    OverlappingCommittees(usize),

    #[error("competencies must be sorted descending (violated at index {0})")]
    NotSorted(usize),

    #[error("probability out of range: {0}")]
    InvalidProbability(f64),

    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("trace underrun for expert {0}")]
    TraceUnderrun(usize),

    #[error("unknown domain {0:?}")]
    UnknownDomain(String),

    #[error("catalogue has no ground truth")]
    MissingTruth,

    #[error("config schema violation: {0}")]
    SchemaViolation(String),

    #[error("trial {trial} failed: {source}")]
    TrialFailure {
        trial: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("remote expert transport failure after {retries} retries: {reason}")]
    RemoteTransport { retries: u32, reason: String },

    #[error("network access disabled; pass --allow-network to enable remote experts")]
    NetworkDisabled,

    #[error("internal solver error: {0}")]
    Internal(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
