use std::path::PathBuf;

use thiserror::Error;

/// Everything that can go wrong between reading frames and writing anomaly maps.
#[derive(Debug, Error)]
pub enum Error {
    #[error("path not found: {}", .0.display())]
    PathNotFound(PathBuf),

    #[error("cannot decode image {}: {reason}", .path.display())]
    UndecodableImage { path: PathBuf, reason: String },

    #[error("geometry mismatch: expected {expected_width}x{expected_height}, got {width}x{height}")]
    GeometryMismatch {
        expected_width: usize,
        expected_height: usize,
        width: usize,
        height: usize,
    },

    #[error("raw file {} holds {len} bytes, not a multiple of the {frame_bytes}-byte frame", .path.display())]
    RawLength {
        path: PathBuf,
        len: u64,
        frame_bytes: usize,
    },

    #[error("bad sidecar header {}: {reason}", .path.display())]
    BadSidecar { path: PathBuf, reason: String },

    #[error("{name} out of range: {value} ({expected})")]
    ParameterOutOfRange {
        name: &'static str,
        value: f64,
        expected: &'static str,
    },

    #[error("event state is empty: push at least one frame")]
    EmptyState,

    #[error("window is full: retire the oldest descriptors before pushing")]
    EvictionNotRetired,

    #[error("no samples")]
    NoSamples,

    #[error("training shorter than window: {frames} frames, w = {window}")]
    TrainingTooShort { frames: usize, window: usize },

    #[error("behavior image magic mismatch: expected {expected:?}, found {found:?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },

    #[error("unsupported behavior image version {found} (expected {expected})")]
    UnsupportedVersion { expected: u16, found: u16 },

    #[error("behavior image checksum mismatch (stored {stored:08x}, computed {computed:08x})")]
    ChecksumMismatch { stored: u32, computed: u32 },

    #[error("malformed behavior image: {0}")]
    MalformedBehavior(String),

    #[error("training metadata mismatch: {}", .0.join("; "))]
    MetadataMismatch(Vec<String>),

    #[error("descriptor {value} at index {index} is nonzero on an idle pixel")]
    DescriptorOnIdle { index: usize, value: f64 },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("pixel ({x}, {y}) outside {width}x{height} frame")]
    PixelOutOfBounds {
        x: usize,
        y: usize,
        width: usize,
        height: usize,
    },

    #[error("{context}:{line}: {reason}")]
    Parse {
        context: String,
        line: usize,
        reason: String,
    },

    #[error("invalid scene script: {0}")]
    InvalidScript(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn parse(context: impl Into<String>, line: usize, reason: impl Into<String>) -> Self {
        Error::Parse {
            context: context.into(),
            line,
            reason: reason.into(),
        }
    }

    /// Errors caused by configuration or parameters rather than by input data.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            Error::ParameterOutOfRange { .. }
                | Error::Parse { .. }
                | Error::InvalidScript(_)
                | Error::MetadataMismatch(_)
                | Error::PixelOutOfBounds { .. }
        )
    }
}
