use thiserror::Error;

/// Errors raised by the election model, CVR handling, and audit machinery.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("candidate set must not be empty")]
    NoCandidates,

    #[error("candidate name must not be empty")]
    EmptyCandidateName,

    #[error("duplicate candidate {0:?}")]
    DuplicateCandidate(String),

    #[error("candidates must be listed in lexicographic order (found {0:?} before {1:?})")]
    CandidatesNotSorted(String, String),

    #[error("at most {max} candidates are supported, got {got}")]
    TooManyCandidates { max: usize, got: usize },

    #[error("unknown candidate {0:?}")]
    UnknownCandidate(String),

    #[error("candidate index {0} out of range")]
    CandidateOutOfRange(usize),

    #[error("interpretation {bits:?} does not have width {width}")]
    BadInterpretation { bits: String, width: usize },

    #[error("interpretation distribution has empty support")]
    EmptySupport,

    #[error("interpretation distribution has a non-positive or non-finite probability {0}")]
    BadProbability(f64),

    #[error("interpretation distribution sums to {0}, not 1")]
    NotNormalized(f64),

    #[error("interpretation {0} appears twice in one distribution")]
    RepeatedInterpretation(String),

    #[error("interpretation set is empty")]
    EmptyInterpretationSet,

    #[error("operation requires a ballot with a ground-truth distribution")]
    ModeMismatch,

    #[error("election or CVR has no ballots")]
    Degenerate,

    #[error("at least two candidates are required for discrepancy")]
    SingleCandidate,

    #[error("CVR declares no winner")]
    NoDeclaredWinner,

    #[error("sample {0} outside [-2, 2]")]
    SampleOutOfRange(f64),

    #[error("invalid test configuration: {0}")]
    InvalidTestConfig(String),

    #[error("notion requires a uniquely labeled election")]
    NotUniquelyLabeled,

    #[error("candidate sets differ between inputs")]
    CandidateMismatch,

    #[error("invalid bound parameters: {0}")]
    InvalidBound(String),

    #[error("unknown environment policy {0:?}")]
    UnknownEnvironment(String),

    #[error("CVR label {0:?} is used twice")]
    DuplicateCvrLabel(String),

    #[error("no ballot request is outstanding; the audit has concluded")]
    Concluded,

    #[error("internal invariant violated: {0}")]
    Invariant(String),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl From<serde_json::Error> for Error {
    fn from(err: serde_json::Error) -> Self {
        Error::Parse(err.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(err: csv::Error) -> Self {
        Error::Parse(err.to_string())
    }
}
