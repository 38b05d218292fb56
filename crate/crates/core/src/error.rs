use thiserror::Error;

/// Every fallible operation in the crate reports through this type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid window: {0}")]
    InvalidWindow(String),
    #[error("invalid grid function: {0}")]
    InvalidGrid(String),
    #[error("empty region: {0}")]
    EmptyRegion(String),
    #[error("invalid exponent: {0}")]
    InvalidExponent(String),
    #[error("ill-conditioned Gram matrix on {context} (condition number {condition:.3e})")]
    IllConditioned { context: String, condition: f64 },
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("no admissible cube for the requested search")]
    NoAdmissibleCube,
    #[error("instance too large: {0}")]
    TooLarge(String),
    #[error("window mismatch: {0}")]
    Resample(String),
    #[error("zero atom: projection removed the whole seed function")]
    ZeroAtom,
    #[error("degenerate cube: {0}")]
    DegenerateCube(String),
    #[error("certification failed: {0}")]
    Certification(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
