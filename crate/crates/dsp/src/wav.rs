//! Minimal RIFF/WAVE reader and writer for the one format the pipeline
//! speaks: PCM, 16-bit little-endian, mono, 8 kHz. Anything else is rejected
//! with a descriptive error rather than resampled.

use std::fs;
use std::path::Path;

use crate::{AudioSignal, DspError, Result};

pub const REQUIRED_SAMPLE_RATE: u32 = 8000;

fn u16le(b: &[u8]) -> u16 {
    u16::from_le_bytes([b[0], b[1]])
}

fn u32le(b: &[u8]) -> u32 {
    u32::from_le_bytes([b[0], b[1], b[2], b[3]])
}

pub fn read_wav(path: impl AsRef<Path>) -> Result<AudioSignal> {
    let bytes = fs::read(path.as_ref())?;
    decode_wav(&bytes)
}

pub fn decode_wav(bytes: &[u8]) -> Result<AudioSignal> {
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(DspError::WavFormat("missing RIFF/WAVE header".into()));
    }
    let mut pos = 12;
    let mut fmt: Option<(u16, u16, u32, u16)> = None; // (codec, channels, rate, bits)
    let mut data: Option<&[u8]> = None;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = u32le(&bytes[pos + 4..pos + 8]) as usize;
        let body_end = pos + 8 + size;
        if body_end > bytes.len() {
            return Err(DspError::WavFormat(format!(
                "chunk {:?} overruns file",
                String::from_utf8_lossy(id)
            )));
        }
        let body = &bytes[pos + 8..body_end];
        match id {
            b"fmt " => {
                if size < 16 {
                    return Err(DspError::WavFormat("fmt chunk too small".into()));
                }
                fmt = Some((
                    u16le(&body[0..2]),
                    u16le(&body[2..4]),
                    u32le(&body[4..8]),
                    u16le(&body[14..16]),
                ));
            }
            b"data" => data = Some(body),
            _ => {}
        }
        // Chunks are word-aligned.
        pos = body_end + (size & 1);
    }
    let (codec, channels, rate, bits) =
        fmt.ok_or_else(|| DspError::WavFormat("no fmt chunk".into()))?;
    if codec != 1 {
        return Err(DspError::WavFormat(format!(
            "only PCM (format tag 1) is supported, got tag {codec}"
        )));
    }
    if bits != 16 {
        return Err(DspError::WavFormat(format!("only 16-bit samples are supported, got {bits}")));
    }
    if channels != 1 {
        return Err(DspError::WavFormat(format!("only mono audio is supported, got {channels} channels")));
    }
    if rate != REQUIRED_SAMPLE_RATE {
        return Err(DspError::WavFormat(format!(
            "only {REQUIRED_SAMPLE_RATE} Hz audio is supported, got {rate} Hz"
        )));
    }
    let data = data.ok_or_else(|| DspError::WavFormat("no data chunk".into()))?;
    let samples: Vec<f64> = data
        .chunks_exact(2)
        .map(|c| i16::from_le_bytes([c[0], c[1]]) as f64 / 32768.0)
        .collect();
    Ok(AudioSignal::new(samples, rate))
}

pub fn encode_wav(audio: &AudioSignal) -> Vec<u8> {
    let n = audio.samples.len();
    let data_len = (n * 2) as u32;
    let mut out = Vec::with_capacity(44 + n * 2);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(36 + data_len).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes()); // PCM
    out.extend_from_slice(&1u16.to_le_bytes()); // mono
    out.extend_from_slice(&audio.sample_rate.to_le_bytes());
    out.extend_from_slice(&(audio.sample_rate * 2).to_le_bytes()); // byte rate
    out.extend_from_slice(&2u16.to_le_bytes()); // block align
    out.extend_from_slice(&16u16.to_le_bytes()); // bits per sample
    out.extend_from_slice(b"data");
    out.extend_from_slice(&data_len.to_le_bytes());
    for &s in &audio.samples {
        let v = (s.clamp(-1.0, 1.0) * 32767.0).round() as i16;
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn write_wav(path: impl AsRef<Path>, audio: &AudioSignal) -> Result<()> {
    fs::write(path.as_ref(), encode_wav(audio))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(n: usize) -> AudioSignal {
        let samples: Vec<f64> = (0..n).map(|i| (i as f64 / n as f64) - 0.5).collect();
        AudioSignal::new(samples, REQUIRED_SAMPLE_RATE)
    }

    #[test]
    fn round_trip_within_quantization() {
        let audio = ramp(1000);
        let decoded = decode_wav(&encode_wav(&audio)).unwrap();
        assert_eq!(decoded.sample_rate, 8000);
        assert_eq!(decoded.samples.len(), 1000);
        for (a, b) in audio.samples.iter().zip(&decoded.samples) {
            assert!((a - b).abs() < 1.0 / 32768.0 + 1e-9);
        }
    }

    #[test]
    fn rejects_wrong_rate_and_channels() {
        let mut stereo = encode_wav(&ramp(10));
        stereo[22] = 2; // channel count
        assert!(matches!(decode_wav(&stereo), Err(DspError::WavFormat(_))));

        let wrong_rate = encode_wav(&AudioSignal::new(vec![0.0; 10], 16000));
        assert!(matches!(decode_wav(&wrong_rate), Err(DspError::WavFormat(_))));

        let mut float_fmt = encode_wav(&ramp(10));
        float_fmt[20] = 3; // IEEE float tag
        assert!(matches!(decode_wav(&float_fmt), Err(DspError::WavFormat(_))));
    }

    #[test]
    fn rejects_truncated_file() {
        let bytes = encode_wav(&ramp(100));
        assert!(decode_wav(&bytes[..30]).is_err());
    }
}
