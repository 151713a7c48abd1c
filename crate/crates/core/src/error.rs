use thiserror::Error;

/// Errors raised by the localization pipeline and its building blocks.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    #[error("rank-deficient BS response matrix: RIS {first} and RIS {second} are not separable (sigma_min/sigma_max = {ratio:e})")]
    RankDeficient { first: usize, second: usize, ratio: f64 },

    #[error("no signal: {0}")]
    NoSignal(String),

    #[error("singular Fisher information: {0}")]
    SingularFim(String),

    #[error("azimuth undefined at zenith (elevation = 0)")]
    ZenithSingularity,

    #[error("problem size exceeds reference solver limit: {0}")]
    SizeExceeded(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("I/O error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
