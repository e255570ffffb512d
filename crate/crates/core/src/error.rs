use std::io;

use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error)]
pub enum ResotError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("channel {channel} out of range ({channels} channels)")]
    ChannelOutOfRange { channel: usize, channels: usize },

    #[error("window of {len} samples is too short (need at least {needed})")]
    WindowTooShort { len: usize, needed: usize },

    #[error("invalid band {low}-{high} Hz at sample rate {sample_rate} Hz")]
    InvalidBand { low: f64, high: f64, sample_rate: f64 },

    #[error("unknown profile `{0}`")]
    UnknownProfile(String),

    #[error("unknown feature kind `{0}`")]
    UnknownFeature(String),

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("invalid path: {0}")]
    InvalidPath(String),

    #[error("empty batch")]
    EmptyBatch,

    #[error("label {label} outside class range 0..{classes}")]
    LabelOutOfRange { label: usize, classes: usize },

    #[error("too few samples: {samples} for {folds} folds")]
    TooFewSamples { samples: usize, folds: usize },

    #[error("codebook overflow: {needed} entries do not fit in {bits} bits")]
    CodebookOverflow { needed: usize, bits: u8 },

    #[error("bad magic bytes")]
    BadMagic,

    #[error("unsupported format version {0}")]
    UnsupportedVersion(u16),

    #[error("truncated payload: {0}")]
    Truncated(&'static str),

    #[error("corrupt model: {0}")]
    Corrupt(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, ResotError>;
