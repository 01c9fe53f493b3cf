use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the diffusion engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed image header at byte {offset}: {reason}")]
    MalformedHeader { offset: usize, reason: String },

    #[error("unsupported magic number {magic:?} at byte 0")]
    UnsupportedMagic { magic: String },

    #[error("truncated payload at byte {offset}: expected {expected} bytes, found {found}")]
    TruncatedPayload {
        offset: usize,
        expected: usize,
        found: usize,
    },

    #[error("value {value} at pixel ({x},{y}) channel {channel} exceeds maxval {maxval}")]
    ValueExceedsMaxval {
        value: u64,
        maxval: u64,
        x: usize,
        y: usize,
        channel: usize,
    },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("pixel ({x},{y}) outside a {width}x{height} lattice")]
    PixelOutOfRange {
        x: usize,
        y: usize,
        width: usize,
        height: usize,
    },

    #[error("bad magic in {what}: expected {expected:?}, found {found:?}")]
    BadMagic {
        what: &'static str,
        expected: [u8; 4],
        found: [u8; 4],
    },

    #[error("corrupt {what}: {reason}")]
    Corrupt { what: &'static str, reason: String },

    #[error("checksum mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    ChecksumMismatch { stored: u32, computed: u32 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("particle sits at a zero-probability position: origin ({ox},{oy}) -> current ({x},{y})")]
    ZeroProbability {
        ox: usize,
        oy: usize,
        x: usize,
        y: usize,
    },

    #[error("ledger and grid disagree: {0}")]
    LedgerMismatch(String),

    #[error("predicted rate is zero where the true rate {truth} is positive (index {index})")]
    ZeroPrediction { index: usize, truth: f64 },

    #[error("invalid rate {value} at index {index}")]
    InvalidRate { index: usize, value: f64 },

    #[error("sampler exceeded {max_steps} steps with t = {t}")]
    MaxStepsExceeded { max_steps: usize, t: f64 },

    #[error("non-finite loss at iteration {iteration}")]
    Divergence { iteration: usize },

    #[error("non-binary value {value} at pixel ({x},{y})")]
    NonBinary { value: u64, x: usize, y: usize },

    #[error("{file}: {reason}")]
    Dataset { file: PathBuf, reason: String },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
