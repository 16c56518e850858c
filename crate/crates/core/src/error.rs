use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("at least two domains are required, got {0}")]
    TooFewDomains(usize),

    #[error("duplicate domain name `{0}`")]
    DuplicateDomain(String),

    #[error("unknown domain `{name}` (valid: {})", valid.join(", "))]
    UnknownDomain { name: String, valid: Vec<String> },

    #[error("domain index {index} out of range for {n} domains")]
    DomainOutOfRange { index: usize, n: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("input {height}x{width} too small for the discriminator (minimum {min}x{min})")]
    InputTooSmall { height: usize, width: usize, min: usize },

    #[error("training diverged: {component} = {value}")]
    Divergence { component: String, value: f64 },

    #[error("dataset error: {0}")]
    Data(String),

    #[error("failed to decode image {path}: {message}")]
    Decode { path: PathBuf, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("checkpoint format version {found} is not supported (expected {expected})")]
    VersionSkew { found: u32, expected: u32 },

    #[error("checksum mismatch in checkpoint blob `{0}`")]
    Checksum(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }
}
