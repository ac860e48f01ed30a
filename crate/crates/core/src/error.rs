use thiserror::Error;

pub type Result<T> = std::result::Result<T, DoaError>;

/// Errors raised by the estimation pipelines and the simulation harness.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum DoaError {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("degenerate sources: {0}")]
    DegenerateSources(String),

    #[error("shape mismatch in {context}: expected {expected}, found {found}")]
    Shape {
        context: &'static str,
        expected: String,
        found: String,
    },

    #[error("index {index} out of range 1..={max}")]
    Index { index: usize, max: usize },

    #[error("unsupported geometry: {0}")]
    UnsupportedGeometry(String),

    #[error("pencil parameter {xi} outside [{min}, {max}] for {channels} channels and {sources} sources")]
    PencilParam {
        xi: usize,
        min: usize,
        max: usize,
        channels: usize,
        sources: usize,
    },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("rank {rank} below required {required} (largest singular value {sigma_max:e})")]
    Rank {
        rank: usize,
        required: usize,
        sigma_max: f64,
    },

    #[error("trial {trial} supplied {found} estimates, expected {expected}")]
    TrialArity {
        trial: usize,
        expected: usize,
        found: usize,
    },

    #[error("singular Fisher information: {0}")]
    SingularFim(String),

    #[error("ambiguous geometry: {0}")]
    AmbiguousGeometry(String),

    #[error("unknown preset `{0}`")]
    UnknownPreset(String),

    #[error("{0}")]
    Io(String),
}

impl DoaError {
    /// Prefixes a configuration context, without repeating the
    /// "invalid configuration" label of nested configuration errors.
    pub fn in_context(self, context: impl std::fmt::Display) -> Self {
        match self {
            DoaError::Config(inner) => DoaError::Config(format!("{context}: {inner}")),
            other => DoaError::Config(format!("{context}: {other}")),
        }
    }

    pub(crate) fn shape(context: &'static str, expected: impl ToString, found: impl ToString) -> Self {
        DoaError::Shape {
            context,
            expected: expected.to_string(),
            found: found.to_string(),
        }
    }
}

impl From<std::io::Error> for DoaError {
    fn from(e: std::io::Error) -> Self {
        DoaError::Io(e.to_string())
    }
}

/// Non-fatal conditions attached to an estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Warning {
    /// The arcsin argument left [-1, 1] by more than the tolerance and was clamped.
    OutOfRange { source: usize, argument: f64 },
    /// Every candidate for a source had a non-positive SNR metric.
    LowSnr { source: usize },
    /// The last disambiguation combiner repeats a candidate to fill its RF chains.
    PaddedCombiner { filled: usize },
}
