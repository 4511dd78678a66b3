use std::path::PathBuf;

use thiserror::Error;

/// Every failure the toolkit can report.
///
/// Each variant carries a stable machine-readable code (see [`Error::code`])
/// which the command-line front end prints on failure.
#[derive(Debug, Error)]
pub enum Error {
    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },
    #[error("unsupported {what} version {version}")]
    UnsupportedVersion { what: &'static str, version: u16 },
    #[error("unsupported header field {field}: {value}")]
    UnsupportedHeader { field: &'static str, value: u32 },
    #[error("file truncated: needed {needed} bytes, {available} available")]
    TruncatedFile { needed: u64, available: u64 },
    #[error("{count} unexpected trailing bytes")]
    TrailingBytes { count: u64 },
    #[error("label {value} at ({x}, {y}, {z}) is out of range")]
    LabelOutOfRange {
        x: usize,
        y: usize,
        z: usize,
        value: u8,
    },
    #[error("grid dimensions {0:?} overflow the 2^32 voxel limit")]
    DimsOverflow([u64; 3]),
    #[error("grid dimensions must be positive, got {0:?}")]
    ZeroDims([usize; 3]),
    #[error("invalid grid metadata: {0}")]
    InvalidMetadata(String),
    #[error("payload size mismatch: expected {expected} bytes, found {found}")]
    SizeMismatch { expected: u64, found: u64 },
    #[error("frame {index} has dims {found:?}, expected {expected:?}")]
    FrameDimMismatch {
        index: usize,
        expected: [usize; 3],
        found: [usize; 3],
    },
    #[error("sequence has no frames")]
    EmptySequence,
    #[error("dimension mismatch: {0}")]
    DimMismatch(String),
    #[error("index ({x}, {y}) out of range for {width}x{height} map")]
    IndexOutOfRange {
        x: usize,
        y: usize,
        width: usize,
        height: usize,
    },
    #[error("need at least 4 correspondences, got {0}")]
    TooFewCorrespondences(usize),
    #[error("every minimal sample was degenerate")]
    DegenerateConfiguration,
    #[error("only {found} inliers, need {required}")]
    TooFewInliers { found: usize, required: usize },
    #[error("homography is singular or non-finite")]
    SingularHomography,
    #[error("cell ({x}, {y}) maps to the plane at infinity")]
    ProjectiveDivideByZero { x: f64, y: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParams(String),
    #[error("history has {found} frames, need at least {required}")]
    HistoryTooShort { found: usize, required: usize },
    #[error("class set is empty")]
    EmptyClassSet,
    #[error("sequence lengths differ: {pred} predicted vs {gt} ground truth")]
    LengthMismatch { pred: usize, gt: usize },
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("unknown preset {0:?}")]
    UnknownPreset(String),
    #[error("invalid config: {0}")]
    ConfigInvalid(String),
    #[error("i/o failure on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Stable identifier printed by the CLI; never changes between releases.
    pub fn code(&self) -> &'static str {
        match self {
            Error::BadMagic { .. } => "BAD_MAGIC",
            Error::UnsupportedVersion { .. } => "UNSUPPORTED_VERSION",
            Error::UnsupportedHeader { .. } => "UNSUPPORTED_HEADER",
            Error::TruncatedFile { .. } => "TRUNCATED_FILE",
            Error::TrailingBytes { .. } => "TRAILING_BYTES",
            Error::LabelOutOfRange { .. } => "LABEL_OUT_OF_RANGE",
            Error::DimsOverflow(_) => "DIMS_OVERFLOW",
            Error::ZeroDims(_) => "ZERO_DIMS",
            Error::InvalidMetadata(_) => "INVALID_METADATA",
            Error::SizeMismatch { .. } => "SIZE_MISMATCH",
            Error::FrameDimMismatch { .. } => "FRAME_DIM_MISMATCH",
            Error::EmptySequence => "EMPTY_SEQUENCE",
            Error::DimMismatch(_) => "DIM_MISMATCH",
            Error::IndexOutOfRange { .. } => "INDEX_OUT_OF_RANGE",
            Error::TooFewCorrespondences(_) => "TOO_FEW_CORRESPONDENCES",
            Error::DegenerateConfiguration => "DEGENERATE_CONFIGURATION",
            Error::TooFewInliers { .. } => "TOO_FEW_INLIERS",
            Error::SingularHomography => "SINGULAR_HOMOGRAPHY",
            Error::ProjectiveDivideByZero { .. } => "PROJECTIVE_DIVIDE_BY_ZERO",
            Error::InvalidParams(_) => "INVALID_PARAMS",
            Error::HistoryTooShort { .. } => "HISTORY_TOO_SHORT",
            Error::EmptyClassSet => "EMPTY_CLASS_SET",
            Error::LengthMismatch { .. } => "LENGTH_MISMATCH",
            Error::InvalidScenario(_) => "INVALID_SCENARIO",
            Error::UnknownPreset(_) => "UNKNOWN_PRESET",
            Error::ConfigInvalid(_) => "CONFIG_INVALID",
            Error::Io { .. } => "IO_FAILURE",
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
