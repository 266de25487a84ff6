use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    // tensor container
    #[error("bad magic bytes, expected \"CCFT\"")]
    BadMagic,
    #[error("unsupported tensor file version {0}")]
    UnsupportedVersion(u8),
    #[error("unsupported tensor dtype code {0}")]
    UnsupportedDtype(u8),
    #[error("malformed tensor header: {0}")]
    MalformedHeader(String),
    #[error("payload holds {actual} scalars but dims require {expected}")]
    DimMismatch { expected: usize, actual: usize },
    #[error("non-finite value at flat index {index}")]
    NonFiniteValue { index: usize },
    #[error("invalid tensor dims {0:?}")]
    InvalidDims(Vec<usize>),

    // manifest
    #[error("manifest parse error: {0}")]
    Parse(String),
    #[error("duplicate image id {0:?}")]
    DuplicateImageId(String),
    #[error("missing file {0}")]
    MissingFile(PathBuf),
    #[error("box {bbox:?} of image {id:?} lies outside {width}x{height}")]
    BoxOutOfBounds {
        id: String,
        bbox: [u32; 4],
        width: u32,
        height: u32,
    },
    #[error("invalid box {0:?}: requires xmin < xmax and ymin < ymax")]
    InvalidBox([u32; 4]),
    #[error("image {id:?}: {what}")]
    InvalidEntry { id: String, what: String },
    #[error("image decode error on {path}: {message}")]
    ImageDecode { path: PathBuf, message: String },

    // ccf
    #[error("feature stack {index} has {found} kernels, expected {expected}")]
    KernelCountMismatch {
        index: usize,
        expected: usize,
        found: usize,
    },
    #[error("vectors have lengths {0} and {1}")]
    LengthMismatch(usize, usize),
    #[error("L_p exponent must be >= 1, got {0}")]
    InvalidExponent(f64),
    #[error("cannot form {k} clusters from {m} kernels")]
    TooFewKernels { m: usize, k: usize },
    #[error("cluster rank {rank} outside 1..={k}")]
    RankOutOfRange { rank: usize, k: usize },
    #[error("cluster at rank {0} has no members")]
    EmptyCluster(usize),
    #[error("kernel id {id} out of range for {m} kernels")]
    KernelOutOfRange { id: usize, m: usize },
    #[error("empty input: {0}")]
    Empty(&'static str),

    // superpixels / graph / propagation
    #[error("image has {pixels} pixels, fewer than the {target} requested superpixels")]
    ImageTooSmall { pixels: usize, target: usize },
    #[error("shape mismatch: expected {expected:?}, found {found:?}")]
    ShapeMismatch {
        expected: (usize, usize),
        found: (usize, usize),
    },
    #[error("boundary value {value} at pixel ({x}, {y}) outside [0, 1]")]
    BoundaryOutOfRange { x: usize, y: usize, value: f64 },
    #[error("diffusion scale mu must be > 0, got {0}")]
    NonPositiveMu(f64),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    // eval
    #[error("result for unknown image id {0:?}")]
    UnknownImageId(String),
    #[error("no result for image id {0:?}")]
    MissingResult(String),
    #[error("duplicate result for image id {0:?}")]
    DuplicateResult(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
