use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("null state: the state has zero norm")]
    NullState,
    #[error("site index {index} out of range for a chain of {len} sites")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("invalid partition: {0}")]
    InvalidPartition(String),
    #[error("partitions overlap at site {0}")]
    OverlappingPartitions(usize),
    #[error("contraction too large: {0}")]
    ContractionTooLarge(String),
    #[error("size cap exceeded: {0}")]
    SizeCap(String),
    #[error("phase convention undefined for even local dimension {0}")]
    PhaseConventionUndefined(usize),
    #[error("unsupported local dimension {0}: {1}")]
    UnsupportedDimension(usize, &'static str),
    #[error("state is not normalized (norm^2 = {0})")]
    NotNormalized(f64),
    #[error("input is not a density matrix: {0}")]
    NotDensityMatrix(String),
    #[error("operator is not unitary (deviation {0:e})")]
    NonUnitary(f64),
    #[error("sampling requires right-canonical gauge (center 0)")]
    RequiresRightCanonical,
    #[error("mismatched supports: {0} vs {1} sites")]
    MismatchedSupport(usize, usize),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("constant trace: autocorrelation undefined")]
    ConstantTrace,
    #[error("trace too short: {0} samples")]
    TraceTooShort(usize),
    #[error("not enough points for fit: {0} (need at least 3)")]
    TooFewPoints(usize),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("malformed state container: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
