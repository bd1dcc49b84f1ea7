//! Crate-wide error type.

use thiserror::Error;

/// Errors produced anywhere in the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("empty signal: {0}")]
    EmptySignal(&'static str),

    #[error("invalid sample rate: {0} Hz")]
    InvalidSampleRate(u32),

    #[error("sample rate mismatch: {left} Hz vs {right} Hz")]
    SampleRateMismatch { left: u32, right: u32 },

    #[error("non-finite sample at index {0}")]
    NonFiniteSample(usize),

    #[error("upsampling not supported: target {target} Hz > source {source_rate} Hz")]
    UpsampleUnsupported { target: u32, source_rate: u32 },

    #[error("filter cutoff {cutoff_hz} Hz not below Nyquist {nyquist_hz} Hz")]
    CutoffAboveNyquist { cutoff_hz: f64, nyquist_hz: f64 },

    #[error("invalid filter spec: {0}")]
    InvalidFilterSpec(String),

    #[error("signal too short: need {needed} samples, got {got}")]
    SignalTooShort { needed: usize, got: usize },

    #[error("invalid frame spec: {0}")]
    InvalidFrameSpec(String),

    #[error("invalid frequency range: f_min {f_min} Hz, f_max {f_max} Hz, nyquist {nyquist} Hz")]
    InvalidFrequencyRange { f_min: f64, f_max: f64, nyquist: f64 },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("sequence too short for correlation: {0} < 2")]
    CorrelationTooShort(usize),

    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("all-zero accelerometer record")]
    AllZeroRecord,

    #[error("no voiced content after silence trimming")]
    NoVoicedContent,

    #[error("all sync frames silent; cannot estimate delay")]
    AllFramesSilent,

    #[error("delay {delay} exceeds signal length {len}")]
    DelayTooLarge { delay: i64, len: usize },

    #[error("unknown device profile: {0}")]
    UnknownDeviceProfile(String),

    #[error("attack scene is inconsistent with available inputs: {0}")]
    InconsistentAttackScene(String),

    #[error("corpus must contain at least {needed} speakers, got {got}")]
    TooFewSpeakers { needed: usize, got: usize },

    #[error("score set needs both genuine and impostor scores")]
    SingleClassScores,

    #[error("protocol `{protocol}` does not match corpus: {reason}")]
    ProtocolMismatch { protocol: String, reason: String },

    #[error("embedding layer tag mismatch: {left} vs {right}")]
    LayerTagMismatch { left: String, right: String },

    #[error("enrollment too short: {got_s:.1} s < {needed_s:.1} s")]
    EnrollmentTooShort { got_s: f64, needed_s: f64 },

    #[error("user `{0}` is not enrolled")]
    UserNotEnrolled(String),

    #[error("label {got} out of range (num classes {num_classes})")]
    LabelOutOfRange { got: usize, num_classes: usize },

    #[error("checkpoint is inconsistent: {0}")]
    BadCheckpoint(String),

    #[error("bad file format in {path}: {reason}")]
    BadFileFormat { path: String, reason: String },

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

impl Error {
    /// Wraps an error with the pipeline stage it came from.
    pub fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// Wraps an io::Error with the offending path.
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
