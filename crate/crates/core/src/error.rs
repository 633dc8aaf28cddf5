use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite value at node {node}")]
    NonFinite { node: usize },

    #[error("non-finite shading output at pixel ({x}, {y})")]
    NonFinitePixel { x: usize, y: usize },

    #[error("index {index} out of range ({len} elements); topology changed since sampling?")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid {what}: {why}")]
    Invalid { what: &'static str, why: String },

    #[error("singular normal equations at damping {lambda:e}")]
    Singular { lambda: f64 },

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Image(#[from] image::ImageError),
}

impl Error {
    pub(crate) fn invalid(what: &'static str, why: impl Into<String>) -> Self {
        Error::Invalid {
            what,
            why: why.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
