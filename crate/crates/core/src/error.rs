use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Problems decoding an RF container.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum FormatError {
    #[error("bad magic: expected \"USDPCRF1\"")]
    BadMagic,
    #[error("unsupported container version {0}")]
    UnsupportedVersion(u16),
    #[error("truncated: expected {expected} bytes, found {actual}")]
    Truncated { expected: usize, actual: usize },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("degenerate frame: {0}")]
    DegenerateFrame(String),
    #[error("record too short: contributions need {needed:.3e} s, record holds {duration:.3e} s")]
    RecordTooShort { needed: f64, duration: f64 },
    #[error("images do not share a grid")]
    GridMismatch,
    #[error("shift of {shift:.3} samples exceeds record length of {len} samples")]
    ShiftExceedsRecord { shift: f64, len: usize },
    #[error("shear of {shear:.4e} m exceeds grid width {width:.4e} m")]
    ShearTooLarge { shear: f64, width: f64 },
    #[error("no image pairs to compound")]
    EmptyPairSet,
    #[error("dataset has no zero-angle reference frame")]
    MissingReference,
    #[error("non-finite value at x index {ix}, z index {iz}")]
    NonFinite { ix: usize, iz: usize },
    #[error("image metadata lacks shear information")]
    MissingShear,
    #[error("configuration: {0}")]
    Config(String),
    #[error("format: {0}")]
    Format(#[from] FormatError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}
