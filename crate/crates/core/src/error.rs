use thiserror::Error;

/// Failure modes shared by every estimator and driver in this crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("insufficient sample: {0}")]
    InsufficientSample(String),
    #[error("degenerate index: selection coefficients are all zero")]
    DegenerateIndex,
    #[error("degenerate local design")]
    DegenerateLocalDesign,
    #[error("no effective observations")]
    NoEffectiveObservations,
    #[error("singular design")]
    SingularDesign,
    #[error("insufficient selected observations")]
    InsufficientSelected,
    #[error("probit failed: {0}")]
    ProbitFailed(String),
    #[error("empty tail")]
    EmptyTail,
    #[error("normalization impossible")]
    NormalizationImpossible,
    #[error("no convergence: {0}")]
    NoConvergence(String),
    #[error("degenerate outcome: selection indicator is constant")]
    DegenerateOutcome,
    #[error("out of numeric range")]
    OutOfRange,
    #[error("bootstrap failed: {0}")]
    BootstrapFailed(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("missing column: {0}")]
    MissingColumn(String),
    #[error("row {row}: {msg}")]
    BadRow { row: usize, msg: String },
    #[error("empty file")]
    EmptyFile,
    #[error("io: {0}")]
    Io(String),
    #[error("{group}: {source}")]
    Group { group: String, source: Box<Error> },
    #[error("every replication failed in cell {0}")]
    CellFailed(String),
}

impl Error {
    pub(crate) fn in_group(self, group: impl Into<String>) -> Self {
        Error::Group {
            group: group.into(),
            source: Box::new(self),
        }
    }

    /// True for failures that come from the data or the numerics rather than
    /// from malformed input.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::InvalidArgument(_)
            | Error::DimensionMismatch(_)
            | Error::MissingColumn(_)
            | Error::BadRow { .. }
            | Error::EmptyFile
            | Error::Io(_) => false,
            Error::Group { source, .. } => source.is_numerical(),
            _ => true,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
