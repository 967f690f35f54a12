use std::path::PathBuf;

/// Errors produced by the obbfuse library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid rotated box: {0}")]
    InvalidBox(String),

    #[error("degenerate quadrilateral (area {area:.3e} px^2)")]
    DegenerateQuad { area: f64 },

    #[error("quadrilateral is not convex")]
    NonConvexQuad,

    #[error("invalid annotation record: {0}")]
    InvalidRecord(String),

    #[error("malformed annotation at line {line}: {reason}")]
    MalformedLine { line: usize, reason: String },

    #[error("I/O failure on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("image {path}: {message}")]
    Image { path: PathBuf, message: String },

    #[error("image id mismatch: {left:?} vs {right:?}")]
    ImageIdMismatch { left: String, right: String },

    #[error("match ({i}, {j}) out of range for {m}x{n} label sets")]
    IndexOutOfRange { i: usize, j: usize, m: usize, n: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("missing weight {0:?}")]
    MissingWeight(String),

    #[error("invalid weight bundle: {0}")]
    InvalidBundle(String),

    #[error("detection category {0:?} is not in the class list")]
    CategoryMismatch(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
