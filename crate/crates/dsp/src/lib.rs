//! Mono PCM audio handling and MFCC feature extraction: framing, Hamming
//! windowing, FFT magnitude spectra, mel filterbank, log compression, DCT-II
//! cepstra, and per-session mean/variance normalization.

pub mod fft;
pub mod features;
pub mod wav;

pub use features::{cmvn, frame_signal, mfcc, FeatureSequence, MfccConfig};
pub use wav::{read_wav, write_wav};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum DspError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad wav file: {0}")]
    WavFormat(String),
    #[error("empty audio")]
    EmptyAudio,
    #[error("need at least {needed} frames, got {got}")]
    TooFewFrames { needed: usize, got: usize },
}

pub type Result<T> = std::result::Result<T, DspError>;

/// Mono audio signal with samples in [−1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct AudioSignal {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl AudioSignal {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Self {
        debug_assert!(sample_rate > 0);
        AudioSignal { samples, sample_rate }
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }
}
