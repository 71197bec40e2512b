//! MFCC extraction and per-session normalization.
//!
//! Pipeline per frame: pre-emphasis → Hamming window → |DFT|² → triangular
//! mel filterbank → log → orthonormal DCT-II → first `num_ceps` coefficients.

use std::f64::consts::PI;

use crate::fft::{next_pow2, power_spectrum};
use crate::{AudioSignal, DspError, Result};

pub const LOG_FLOOR: f64 = 1e-10;

/// T×F matrix of feature frames plus frame-timing metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSequence {
    data: Vec<f64>, // row-major T×F
    rows: usize,
    cols: usize,
    pub frame_shift_s: f64,
    pub frame_length_s: f64,
}

impl FeatureSequence {
    pub fn new(
        data: Vec<f64>,
        rows: usize,
        cols: usize,
        frame_shift_s: f64,
        frame_length_s: f64,
    ) -> Self {
        debug_assert_eq!(data.len(), rows * cols);
        debug_assert!(frame_shift_s <= frame_length_s);
        FeatureSequence { data, rows, cols, frame_shift_s, frame_length_s }
    }

    pub fn num_frames(&self) -> usize {
        self.rows
    }

    pub fn dim(&self) -> usize {
        self.cols
    }

    pub fn frame(&self, t: usize) -> &[f64] {
        &self.data[t * self.cols..(t + 1) * self.cols]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Copies the given frame indices into a new matrix (same metadata).
    pub fn gather(&self, indices: &[usize]) -> FeatureSequence {
        let mut data = Vec::with_capacity(indices.len() * self.cols);
        for &t in indices {
            data.extend_from_slice(self.frame(t));
        }
        FeatureSequence::new(
            data,
            indices.len(),
            self.cols,
            self.frame_shift_s,
            self.frame_length_s,
        )
    }
}

#[derive(Debug, Clone)]
pub struct MfccConfig {
    pub frame_length_s: f64,
    pub frame_shift_s: f64,
    pub num_mel_filters: usize,
    pub num_ceps: usize,
    pub pre_emphasis: f64,
    pub low_freq_hz: f64,
}

impl Default for MfccConfig {
    fn default() -> Self {
        MfccConfig {
            frame_length_s: 0.025,
            frame_shift_s: 0.010,
            num_mel_filters: 23,
            num_ceps: 20,
            pre_emphasis: 0.97,
            low_freq_hz: 20.0,
        }
    }
}

pub fn hamming_window(n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![1.0];
    }
    (0..n)
        .map(|i| 0.54 - 0.46 * (2.0 * PI * i as f64 / (n - 1) as f64).cos())
        .collect()
}

/// Splits the signal into Hamming-windowed frames of `win` samples every
/// `hop` samples. Yields floor((len − win)/hop) + 1 frames, none if the
/// signal is shorter than one window.
pub fn frame_signal(audio: &AudioSignal, win: usize, hop: usize) -> Vec<Vec<f64>> {
    debug_assert!(win >= hop && hop >= 1);
    let n = audio.samples.len();
    if n < win {
        return Vec::new();
    }
    let window = hamming_window(win);
    let count = (n - win) / hop + 1;
    (0..count)
        .map(|f| {
            audio.samples[f * hop..f * hop + win]
                .iter()
                .zip(&window)
                .map(|(s, w)| s * w)
                .collect()
        })
        .collect()
}

fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Triangular mel filterbank over FFT bins, filters linear in Hz between
/// mel-spaced edge frequencies. Each bank row has nfft/2 + 1 weights.
pub fn mel_filterbank(
    num_filters: usize,
    nfft: usize,
    sample_rate: u32,
    low_hz: f64,
    high_hz: f64,
) -> Vec<Vec<f64>> {
    let bins = nfft / 2 + 1;
    let low_mel = hz_to_mel(low_hz);
    let high_mel = hz_to_mel(high_hz);
    let edges: Vec<f64> = (0..num_filters + 2)
        .map(|i| mel_to_hz(low_mel + (high_mel - low_mel) * i as f64 / (num_filters + 1) as f64))
        .collect();
    let bin_hz = |k: usize| k as f64 * sample_rate as f64 / nfft as f64;
    (0..num_filters)
        .map(|m| {
            let (lo, mid, hi) = (edges[m], edges[m + 1], edges[m + 2]);
            (0..bins)
                .map(|k| {
                    let f = bin_hz(k);
                    if f <= lo || f >= hi {
                        0.0
                    } else if f <= mid {
                        (f - lo) / (mid - lo)
                    } else {
                        (hi - f) / (hi - mid)
                    }
                })
                .collect()
        })
        .collect()
}

/// Center frequencies (Hz) of the filterbank, for tests and diagnostics.
pub fn mel_filter_centers(num_filters: usize, low_hz: f64, high_hz: f64) -> Vec<f64> {
    let low_mel = hz_to_mel(low_hz);
    let high_mel = hz_to_mel(high_hz);
    (1..=num_filters)
        .map(|i| mel_to_hz(low_mel + (high_mel - low_mel) * i as f64 / (num_filters + 1) as f64))
        .collect()
}

/// Orthonormal DCT-II matrix [num_ceps × num_filters]: C·Cᵀ = I when square.
pub fn dct_ii_orthonormal(num_ceps: usize, num_filters: usize) -> Vec<Vec<f64>> {
    let m = num_filters as f64;
    (0..num_ceps)
        .map(|k| {
            let scale = if k == 0 { (1.0 / m).sqrt() } else { (2.0 / m).sqrt() };
            (0..num_filters)
                .map(|n| scale * (PI * k as f64 * (2.0 * n as f64 + 1.0) / (2.0 * m)).cos())
                .collect()
        })
        .collect()
}

/// Log mel-filterbank energies per frame: the pre-DCT stage of [`mfcc`].
pub fn log_mel_spectrogram(audio: &AudioSignal, config: &MfccConfig) -> Result<Vec<Vec<f64>>> {
    if audio.samples.is_empty() {
        return Err(DspError::EmptyAudio);
    }
    let sr = audio.sample_rate;
    let win = (config.frame_length_s * sr as f64).round() as usize;
    let hop = (config.frame_shift_s * sr as f64).round() as usize;

    // Pre-emphasis over the whole signal; first sample passes through.
    let mut emphasized = Vec::with_capacity(audio.samples.len());
    emphasized.push(audio.samples[0]);
    for i in 1..audio.samples.len() {
        emphasized.push(audio.samples[i] - config.pre_emphasis * audio.samples[i - 1]);
    }
    let emphasized = AudioSignal::new(emphasized, sr);

    let nfft = next_pow2(win);
    let bank = mel_filterbank(
        config.num_mel_filters,
        nfft,
        sr,
        config.low_freq_hz,
        sr as f64 / 2.0,
    );
    let frames = frame_signal(&emphasized, win, hop);
    Ok(frames
        .iter()
        .map(|frame| {
            let spec = power_spectrum(frame, nfft);
            bank.iter()
                .map(|filt| {
                    let e: f64 = filt.iter().zip(&spec).map(|(w, p)| w * p).sum();
                    (e + LOG_FLOOR).ln()
                })
                .collect()
        })
        .collect())
}

/// Full MFCC extraction. Fails on empty audio.
pub fn mfcc(audio: &AudioSignal, config: &MfccConfig) -> Result<FeatureSequence> {
    let log_mel = log_mel_spectrogram(audio, config)?;
    let dct = dct_ii_orthonormal(config.num_ceps, config.num_mel_filters);
    let rows = log_mel.len();
    let mut data = Vec::with_capacity(rows * config.num_ceps);
    for mel in &log_mel {
        for row in &dct {
            data.push(row.iter().zip(mel).map(|(c, e)| c * e).sum());
        }
    }
    Ok(FeatureSequence::new(
        data,
        rows,
        config.num_ceps,
        config.frame_shift_s,
        config.frame_length_s,
    ))
}

/// Per-session cepstral mean/variance normalization: every column ends with
/// mean 0 and unit variance, with a 1e-8 variance floor so constant columns
/// normalize to zero. Needs at least two frames.
pub fn cmvn(feats: &FeatureSequence) -> Result<FeatureSequence> {
    const VAR_FLOOR: f64 = 1e-8;
    let (t, f) = (feats.num_frames(), feats.dim());
    if t < 2 {
        return Err(DspError::TooFewFrames { needed: 2, got: t });
    }
    let mut mean = vec![0.0; f];
    for ti in 0..t {
        for (m, v) in mean.iter_mut().zip(feats.frame(ti)) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= t as f64);
    let mut var = vec![0.0; f];
    for ti in 0..t {
        for (j, v) in feats.frame(ti).iter().enumerate() {
            let d = v - mean[j];
            var[j] += d * d;
        }
    }
    let scale: Vec<f64> = var
        .iter()
        .map(|v| 1.0 / (v / t as f64).max(VAR_FLOOR).sqrt())
        .collect();
    let mut data = Vec::with_capacity(t * f);
    for ti in 0..t {
        for (j, v) in feats.frame(ti).iter().enumerate() {
            data.push((v - mean[j]) * scale[j]);
        }
    }
    Ok(FeatureSequence::new(
        data,
        t,
        f,
        feats.frame_shift_s,
        feats.frame_length_s,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tone(freq: f64, duration_s: f64) -> AudioSignal {
        let sr = 8000u32;
        let n = (duration_s * sr as f64) as usize;
        let samples = (0..n)
            .map(|i| 0.4 * (2.0 * PI * freq * i as f64 / sr as f64).sin())
            .collect();
        AudioSignal::new(samples, sr)
    }

    #[test]
    fn frame_count_formula() {
        let audio = AudioSignal::new(vec![0.1; 8000], 8000);
        assert_eq!(frame_signal(&audio, 200, 80).len(), 98);
        let short = AudioSignal::new(vec![0.1; 150], 8000);
        assert!(frame_signal(&short, 200, 80).is_empty());
    }

    #[test]
    fn constant_signal_frames_equal_window() {
        let audio = AudioSignal::new(vec![0.25; 500], 8000);
        let frames = frame_signal(&audio, 128, 64);
        let window = hamming_window(128);
        for frame in frames {
            for (f, w) in frame.iter().zip(&window) {
                assert!((f - 0.25 * w).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn dct_basis_is_orthonormal() {
        let n = 23;
        let dct = dct_ii_orthonormal(n, n);
        for i in 0..n {
            for j in 0..n {
                let dot: f64 = (0..n).map(|k| dct[i][k] * dct[j][k]).sum();
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((dot - expect).abs() < 1e-9, "row {i}·row {j} = {dot}");
            }
        }
        // Round trip: Cᵀ·C·x == x.
        let x: Vec<f64> = (0..n).map(|i| (i as f64 * 0.37).sin()).collect();
        let y: Vec<f64> = (0..n)
            .map(|k| (0..n).map(|i| dct[k][i] * x[i]).sum())
            .collect();
        let back: Vec<f64> = (0..n)
            .map(|i| (0..n).map(|k| dct[k][i] * y[k]).sum())
            .collect();
        for (a, b) in x.iter().zip(&back) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn dct_of_constant_concentrates_in_c0() {
        let n = 23;
        let dct = dct_ii_orthonormal(n, n);
        let x = vec![1.5; n];
        let y: Vec<f64> = (0..n)
            .map(|k| (0..n).map(|i| dct[k][i] * x[i]).sum())
            .collect();
        assert!(y[0].abs() > 1e-6);
        for v in &y[1..] {
            assert!(v.abs() < 1e-9);
        }
    }

    #[test]
    fn mel_bank_weights_are_bounded() {
        let bank = mel_filterbank(23, 256, 8000, 20.0, 4000.0);
        let bins = 129;
        for k in 0..bins {
            let total: f64 = bank.iter().map(|f| f[k]).sum();
            assert!(total <= 1.0 + 1e-9, "bin {k} total {total}");
            for f in &bank {
                assert!(f[k] >= 0.0);
            }
        }
    }

    #[test]
    fn sine_energy_lands_in_nearest_filter() {
        let cfg = MfccConfig::default();
        let audio = tone(1000.0, 0.5);
        let log_mel = log_mel_spectrogram(&audio, &cfg).unwrap();
        let centers = mel_filter_centers(cfg.num_mel_filters, cfg.low_freq_hz, 4000.0);
        let nearest = centers
            .iter()
            .enumerate()
            .min_by(|a, b| {
                (a.1 - 1000.0).abs().partial_cmp(&(b.1 - 1000.0).abs()).unwrap()
            })
            .unwrap()
            .0;
        // Use a middle frame to avoid edge effects.
        let frame = &log_mel[log_mel.len() / 2];
        let peak = frame
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap()
            .0;
        assert_eq!(peak, nearest, "centers near 1 kHz: {:?}", &centers[peak.min(nearest).saturating_sub(1)..]);
    }

    #[test]
    fn silence_gives_identical_frames() {
        let audio = AudioSignal::new(vec![0.0; 4000], 8000);
        let feats = mfcc(&audio, &MfccConfig::default()).unwrap();
        let first = feats.frame(0).to_vec();
        for t in 1..feats.num_frames() {
            assert_eq!(feats.frame(t), &first[..]);
        }
    }

    #[test]
    fn mfcc_rejects_empty_audio() {
        let audio = AudioSignal::new(vec![], 8000);
        assert!(matches!(
            mfcc(&audio, &MfccConfig::default()),
            Err(DspError::EmptyAudio)
        ));
    }

    #[test]
    fn cmvn_normalizes_columns() {
        let audio = tone(700.0, 1.0);
        let feats = cmvn(&mfcc(&audio, &MfccConfig::default()).unwrap()).unwrap();
        let (t, f) = (feats.num_frames(), feats.dim());
        for j in 0..f {
            let mean: f64 = (0..t).map(|ti| feats.frame(ti)[j]).sum::<f64>() / t as f64;
            let var: f64 =
                (0..t).map(|ti| (feats.frame(ti)[j] - mean).powi(2)).sum::<f64>() / t as f64;
            assert!(mean.abs() < 1e-9, "column {j} mean {mean}");
            assert!((var - 1.0).abs() < 1e-6, "column {j} var {var}");
        }
    }

    #[test]
    fn cmvn_constant_column_flattens_to_zero() {
        let feats = FeatureSequence::new(vec![3.25; 10 * 4], 10, 4, 0.010, 0.025);
        let out = cmvn(&feats).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn cmvn_needs_two_frames() {
        let feats = FeatureSequence::new(vec![1.0; 4], 1, 4, 0.010, 0.025);
        assert!(matches!(cmvn(&feats), Err(DspError::TooFewFrames { .. })));
    }
}
