use thiserror::Error;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("backward called on non-scalar value of shape {shape:?}")]
    NonScalarBackward { shape: Vec<usize> },
    #[error("input dimension {got} does not match network input {expected}")]
    InputDimMismatch { expected: usize, got: usize },
    #[error("parameter/gradient count mismatch: {params} params, {grads} grads")]
    GradCountMismatch { params: usize, grads: usize },
    #[error("checkpoint io: {0}")]
    Io(#[from] std::io::Error),
    #[error("checkpoint manifest: {0}")]
    Manifest(String),
    #[error("checkpoint blob truncated: wanted {wanted} bytes at offset {offset}")]
    BlobTruncated { wanted: usize, offset: usize },
}
