//! Two-stage speaker diarization at desk scale.
//!
//! Stage one clusters sliding-window speaker embeddings (AHC over cosine
//! distance) into per-speaker occurrence masks. Stage two extracts one
//! representation per speaker — either a trainable z-vector (residual conv
//! stack + attentive statistics pooling) or an externally supplied embedding
//! — and feeds it, together with the session MFCCs, to a detector built from
//! time- and speaker-axis contextualizer blocks that emits frame-level
//! activity posteriors for any number of speakers. Hypotheses are written as
//! RTTM and scored with DER/JER.

pub mod ahc;
pub mod detector;
pub mod embed;
pub mod formats;
pub mod pipeline;
pub mod rttm;
pub mod score;
pub mod sim;
pub mod train;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Numeric(#[from] mtead_numeric::NumericError),
    #[error(transparent)]
    Dsp(#[from] mtead_dsp::DspError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("rttm parse error at line {line}: {message}")]
    RttmParse { line: usize, message: String },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("speaker `{0}` has no active frames")]
    NoActiveFrames(String),
    #[error("bad file format: {0}")]
    FileFormat(String),
    #[error("checkpoint version mismatch: expected magic {expected:?}, found {found:?}")]
    CheckpointVersion { expected: String, found: String },
    #[error("checkpoint truncated: {0}")]
    CheckpointTruncated(String),
    #[error("checkpoint corrupt: CRC mismatch")]
    CheckpointCrc,
    #[error("dimension mismatch for `{name}`: expected {expected:?}, found {found:?}")]
    DimMismatch { name: String, expected: Vec<usize>, found: Vec<usize> },
    #[error("training aborted at step {step}: {message}")]
    TrainingAborted { step: u64, message: String },
}

pub type Result<T> = std::result::Result<T, Error>;
