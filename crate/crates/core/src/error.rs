
/// Errors raised across the laboratory.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid lattice spec: {0}")]
    InvalidSpec(String),
    #[error("invalid region: {0}")]
    InvalidRegion(String),
    #[error("not an edge of the lattice: {0}")]
    NotAnEdge(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("invalid scale parameters: {0}")]
    InvalidScales(String),
    #[error("out of range: {0}")]
    OutOfRange(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("instance too large: {0}")]
    TooLarge(String),
    #[error("invalid kernel: {0}")]
    InvalidKernel(String),
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

