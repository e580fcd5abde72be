use thiserror::Error;

/// Errors produced by the engine.
///
/// Validation failures (shape/config problems) and I/O failures are kept in
/// distinct variants so callers can map them to different exit codes.
#[derive(Debug, Error)]
pub enum Error {
    #[error("channel mismatch in {context}: expected {expected}, got {got}")]
    ChannelMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error(
        "spatial mismatch in {context}: expected {expected_h}x{expected_w}, got {got_h}x{got_w}"
    )]
    SpatialMismatch {
        context: &'static str,
        expected_h: usize,
        expected_w: usize,
        got_h: usize,
        got_w: usize,
    },

    #[error(
        "data length {got} does not match shape {channels}x{height}x{width} (need {expected})"
    )]
    DataLength {
        channels: usize,
        height: usize,
        width: usize,
        expected: usize,
        got: usize,
    },

    #[error("convolution geometry invalid: input {in_h}x{in_w}, kernel {kh}x{kw}, stride {stride}, padding {padding} gives empty output")]
    ConvGeometry {
        in_h: usize,
        in_w: usize,
        kh: usize,
        kw: usize,
        stride: usize,
        padding: usize,
    },

    #[error("{context}: dimension {dim} not divisible by {divisor}")]
    NotDivisible {
        context: &'static str,
        dim: usize,
        divisor: usize,
    },

    #[error("shift component {name} = {value} outside [0, 1)")]
    ShiftRange { name: &'static str, value: f32 },

    #[error("all-pairs guard: {positions} positions exceeds {limit}; use the tiled just-in-time lookup instead")]
    AllPairsGuard { positions: usize, limit: usize },

    #[error("n_slice = {n_slice} out of range (must be in 1..={max})")]
    SliceCount { n_slice: usize, max: usize },

    #[error("invalid value for {name}: {message}")]
    InvalidValue { name: &'static str, message: String },

    #[error("weights entry '{name}': {message}")]
    WeightsShape { name: String, message: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("no valid pixels in metric mask")]
    EmptyMask,

    #[error("{path}: malformed {format} at byte {offset}: {message}")]
    FileFormat {
        path: String,
        format: &'static str,
        offset: u64,
        message: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// True for failures that stem from the filesystem rather than from
    /// invalid inputs or shapes.
    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io { .. } | Error::FileFormat { .. })
    }
}

pub type Result<T> = std::result::Result<T, Error>;
