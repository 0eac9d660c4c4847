use thiserror::Error;

#[derive(Debug, Error)]
pub enum SdfError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("grid contains non-finite samples")]
    NonFiniteSamples,
    #[error("bad grid file: {0}")]
    BadGridFile(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad field descriptor {descriptor:?}: {reason}")]
    BadDescriptor { descriptor: String, reason: String },
    #[error("operation not supported for this field variant: {0}")]
    Unsupported(&'static str),
    #[error("network evaluation: {0}")]
    Nn(#[from] surfmap_nn::NnError),
}
