//! Deterministic synthetic multi-speaker session generation.
//!
//! Each speaker is a harmonic voice (stacked partials of a fundamental plus
//! a little noise) laid out on its own timeline as an alternating chain of
//! exponential pauses and uniform-length utterances; the per-speaker pause
//! mean β controls how much the mixed timelines overlap. Ground truth is
//! recorded per utterance.

use std::f64::consts::PI;

use mtead_dsp::AudioSignal;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::rttm::{Segment, SegmentList};
use crate::{Error, Result};

pub const SAMPLE_RATE: u32 = 8000;
const FADE_S: f64 = 0.020;
const PEAK: f64 = 0.5;

/// A synthetic voice: fundamental, per-harmonic amplitudes, noise floor.
#[derive(Debug, Clone)]
pub struct SpeakerVoice {
    pub speaker_id: String,
    pub f0_hz: f64,
    pub harmonic_amplitudes: Vec<f64>,
    pub noise_level: f64,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct SimConfig {
    pub num_speakers: usize,
    pub beta_s: f64,
    pub utterances_per_speaker: usize,
    pub utterance_len_range_s: (f64, f64),
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            num_speakers: 2,
            beta_s: 3.0,
            utterances_per_speaker: 10,
            utterance_len_range_s: (1.0, 4.0),
            seed: 0,
        }
    }
}

/// One simulated session: mixture audio, ground truth, and the inputs that
/// produced it.
#[derive(Debug, Clone)]
pub struct Session {
    pub id: String,
    pub audio: AudioSignal,
    pub truth: SegmentList,
    pub voices: Vec<SpeakerVoice>,
    pub config: SimConfig,
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E3779B97F4A7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

/// Derives the speaker voices of a session deterministically from the
/// session seed. Fundamentals are drawn from well-separated slots so voices
/// within one session stay spectrally distinct.
pub fn derive_voices(session_seed: u64, num_speakers: usize) -> Vec<SpeakerVoice> {
    const F0_SLOTS: [f64; 7] = [90.0, 110.0, 135.0, 165.0, 200.0, 240.0, 285.0];
    assert!(
        num_speakers <= F0_SLOTS.len(),
        "at most {} speakers per session",
        F0_SLOTS.len()
    );
    let mut state = session_seed ^ 0xA5A5_5A5A_DEAD_BEEF;
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(&mut state));
    let mut slots: Vec<f64> = F0_SLOTS.to_vec();
    // Fisher-Yates over the slot list.
    for i in (1..slots.len()).rev() {
        let j = rng.gen_range(0..=i);
        slots.swap(i, j);
    }
    (0..num_speakers)
        .map(|i| {
            let jitter = rng.gen_range(0.95..1.05);
            let decay = rng.gen_range(0.5..1.5);
            let amps: Vec<f64> = (1..=8)
                .map(|k| (k as f64).powf(-decay) * rng.gen_range(0.5..1.5))
                .collect();
            SpeakerVoice {
                speaker_id: format!("spk{i}"),
                f0_hz: (slots[i] * jitter).clamp(80.0, 300.0),
                harmonic_amplitudes: amps,
                noise_level: 0.01,
                seed: splitmix64(&mut state),
            }
        })
        .collect()
}

/// Synthesizes one utterance: harmonics of f0 below Nyquist at the voice's
/// amplitudes plus white noise, peak-normalized to 0.5, with 20 ms
/// raised-cosine fades at both ends. Deterministic in (voice, duration).
pub fn synth_speaker_signal(voice: &SpeakerVoice, duration_s: f64) -> AudioSignal {
    debug_assert!(duration_s > 0.0);
    let sr = SAMPLE_RATE as f64;
    let n = (duration_s * sr).round() as usize;
    let nyquist = sr / 2.0;
    let mut rng = ChaCha8Rng::seed_from_u64(voice.seed);
    let harmonics: Vec<(f64, f64, f64)> = voice
        .harmonic_amplitudes
        .iter()
        .enumerate()
        .map(|(i, &a)| ((i + 1) as f64 * voice.f0_hz, a, rng.gen_range(0.0..2.0 * PI)))
        .filter(|&(f, _, _)| f < nyquist)
        .collect();
    let mut samples: Vec<f64> = (0..n)
        .map(|i| {
            let t = i as f64 / sr;
            harmonics
                .iter()
                .map(|&(f, a, ph)| a * (2.0 * PI * f * t + ph).sin())
                .sum::<f64>()
        })
        .collect();
    if voice.noise_level > 0.0 {
        for s in samples.iter_mut() {
            let z: f64 = StandardNormal.sample(&mut rng);
            *s += voice.noise_level * z;
        }
    }
    let peak = samples.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
    if peak > 0.0 {
        let scale = PEAK / peak;
        samples.iter_mut().for_each(|v| *v *= scale);
    }
    let fade = ((FADE_S * sr) as usize).min(n / 2);
    for i in 0..fade {
        let w = 0.5 * (1.0 - (PI * (i as f64 + 0.5) / fade as f64).cos());
        samples[i] *= w;
        samples[n - 1 - i] *= w;
    }
    AudioSignal::new(samples, SAMPLE_RATE)
}

/// Simulates one session: every speaker's timeline starts with a pause drawn
/// from Exponential(mean β), alternating with utterances of uniform length
/// in the configured range; the per-speaker signals are summed into one
/// mixture (clipped to [−1, 1]) and every utterance becomes a truth segment.
pub fn simulate_session(config: &SimConfig) -> Result<Session> {
    if config.num_speakers < 1 {
        return Err(Error::InvalidInput("need at least one speaker".into()));
    }
    let (lo, hi) = config.utterance_len_range_s;
    if !(lo > 0.0 && hi >= lo && config.beta_s > 0.0 && config.utterances_per_speaker >= 1) {
        return Err(Error::InvalidInput("bad simulation config".into()));
    }
    let voices = derive_voices(config.seed, config.num_speakers);
    let id = format!("sim{:010}", config.seed);
    let sr = SAMPLE_RATE as f64;

    let mut state = config.seed ^ 0x0123_4567_89AB_CDEF;
    let mut segments = Vec::new();
    let mut tracks: Vec<(usize, AudioSignal)> = Vec::new(); // (sample offset, utterance)
    for voice in &voices {
        let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(&mut state));
        let mut t = 0.0f64;
        for _ in 0..config.utterances_per_speaker {
            let u: f64 = rng.gen_range(0.0..1.0);
            let gap = -config.beta_s * (1.0 - u).ln();
            t += gap;
            let dur = if hi > lo { rng.gen_range(lo..hi) } else { lo };
            // Quantize to whole samples so truth and audio agree exactly.
            let onset_samples = (t * sr).round() as usize;
            let utterance = synth_speaker_signal(voice, dur);
            let dur_samples = utterance.samples.len();
            segments.push(Segment {
                recording_id: id.clone(),
                speaker: voice.speaker_id.clone(),
                onset_s: onset_samples as f64 / sr,
                duration_s: dur_samples as f64 / sr,
            });
            tracks.push((onset_samples, utterance));
            t = (onset_samples + dur_samples) as f64 / sr;
        }
    }

    let total_samples = tracks
        .iter()
        .map(|(off, sig)| off + sig.samples.len())
        .max()
        .unwrap_or(0)
        + (0.1 * sr) as usize;
    let mut mix = vec![0.0f64; total_samples];
    for (off, sig) in &tracks {
        for (i, &v) in sig.samples.iter().enumerate() {
            mix[off + i] += v;
        }
    }
    mix.iter_mut().for_each(|v| *v = v.clamp(-1.0, 1.0));

    Ok(Session {
        id,
        audio: AudioSignal::new(mix, SAMPLE_RATE),
        truth: SegmentList::new(segments),
        voices,
        config: config.clone(),
    })
}

/// Fraction of speech time where two or more speakers are active, measured
/// on a 1 ms grid: (time with ≥2 active) / (time with ≥1 active).
pub fn overlap_ratio(truth: &SegmentList) -> Result<f64> {
    if truth.is_empty() {
        return Err(Error::InvalidInput("overlap ratio of empty truth".into()));
    }
    let cells = (truth.max_end_s() * 1000.0).ceil() as usize;
    let mut counts = vec![0u8; cells];
    for seg in truth.segments() {
        // A 1 ms cell belongs to the segment iff its center does.
        let first = ((seg.onset_s * 1000.0 - 0.5).ceil().max(0.0)) as usize;
        let last = ((seg.end_s() * 1000.0 - 0.5).ceil().max(0.0) as usize).min(cells);
        for c in counts.iter_mut().take(last).skip(first) {
            *c = c.saturating_add(1);
        }
    }
    let speech = counts.iter().filter(|&&c| c >= 1).count();
    if speech == 0 {
        return Ok(0.0);
    }
    let overlap = counts.iter().filter(|&&c| c >= 2).count();
    Ok(overlap as f64 / speech as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rttm::Segment;
    use mtead_dsp::fft::power_spectrum;

    #[test]
    fn pure_harmonic_peaks_at_f0() {
        let voice = SpeakerVoice {
            speaker_id: "v".into(),
            f0_hz: 250.0,
            harmonic_amplitudes: vec![1.0],
            noise_level: 0.0,
            seed: 3,
        };
        let sig = synth_speaker_signal(&voice, 0.5);
        // Skip the fades, analyze the middle.
        let mid = &sig.samples[800..800 + 2048];
        let spec = power_spectrum(mid, 2048);
        let peak_bin = spec
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap()
            .0;
        let peak_hz = peak_bin as f64 * 8000.0 / 2048.0;
        assert!((peak_hz - 250.0).abs() < 8000.0 / 2048.0 * 1.5, "peak at {peak_hz} Hz");
    }

    #[test]
    fn synthesis_is_deterministic_and_peak_normalized() {
        let voice = &derive_voices(99, 2)[1];
        let a = synth_speaker_signal(voice, 1.25);
        let b = synth_speaker_signal(voice, 1.25);
        assert_eq!(a.samples, b.samples);
        let peak = a.samples.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
        assert!((peak - 0.5).abs() < 1e-6, "peak {peak}");
    }

    #[test]
    fn session_is_deterministic() {
        let config = SimConfig { seed: 7, ..SimConfig::default() };
        let a = simulate_session(&config).unwrap();
        let b = simulate_session(&config).unwrap();
        assert_eq!(a.audio.samples, b.audio.samples);
        assert_eq!(a.truth, b.truth);
    }

    #[test]
    fn truth_segments_lie_inside_audio() {
        let session = simulate_session(&SimConfig { seed: 5, num_speakers: 3, ..SimConfig::default() }).unwrap();
        let dur = session.audio.duration_s();
        for seg in session.truth.segments() {
            assert!(seg.end_s() <= dur + 1e-9);
        }
    }

    #[test]
    fn single_speaker_has_zero_overlap() {
        let session = simulate_session(&SimConfig {
            num_speakers: 1,
            seed: 11,
            ..SimConfig::default()
        })
        .unwrap();
        assert_eq!(overlap_ratio(&session.truth).unwrap(), 0.0);
    }

    #[test]
    fn overlap_ratio_hand_cases() {
        let mk = |spk: &str, onset: f64, dur: f64| Segment {
            recording_id: "r".into(),
            speaker: spk.into(),
            onset_s: onset,
            duration_s: dur,
        };
        let disjoint = SegmentList::new(vec![mk("a", 0.0, 1.0), mk("b", 2.0, 1.0)]);
        assert_eq!(overlap_ratio(&disjoint).unwrap(), 0.0);
        let identical = SegmentList::new(vec![mk("a", 0.0, 2.0), mk("b", 0.0, 2.0)]);
        assert_eq!(overlap_ratio(&identical).unwrap(), 1.0);
        // A[0,2], B[1,3]: overlap 1 s of 3 s speech.
        let third = SegmentList::new(vec![mk("a", 0.0, 2.0), mk("b", 1.0, 2.0)]);
        assert!((overlap_ratio(&third).unwrap() - 1.0 / 3.0).abs() < 1e-3);
        assert!(overlap_ratio(&SegmentList::default()).is_err());
    }

    #[test]
    fn smaller_beta_means_more_overlap() {
        let mean_overlap = |beta: f64| {
            let mut acc = 0.0;
            for seed in 0..12 {
                let s = simulate_session(&SimConfig {
                    beta_s: beta,
                    seed,
                    ..SimConfig::default()
                })
                .unwrap();
                acc += overlap_ratio(&s.truth).unwrap();
            }
            acc / 12.0
        };
        assert!(mean_overlap(3.0) > mean_overlap(9.0));
    }

    #[test]
    fn labeled_regions_are_audible() {
        let session = simulate_session(&SimConfig { seed: 21, ..SimConfig::default() }).unwrap();
        let sr = SAMPLE_RATE as f64;
        let rms = |lo: usize, hi: usize| {
            let s = &session.audio.samples[lo..hi.min(session.audio.samples.len())];
            (s.iter().map(|v| v * v).sum::<f64>() / s.len().max(1) as f64).sqrt()
        };
        // Silence RMS: max over 50 ms probes where nobody is active.
        let active = |t: f64| {
            session
                .truth
                .segments()
                .iter()
                .any(|s| s.onset_s <= t && t < s.end_s())
        };
        let mut silence_rms = 0.0f64;
        let dur = session.audio.duration_s();
        let mut probe = 0.0;
        while probe + 0.05 < dur {
            if !active(probe) && !active(probe + 0.05) {
                silence_rms = silence_rms.max(rms((probe * sr) as usize, ((probe + 0.05) * sr) as usize));
            }
            probe += 0.05;
        }
        for seg in session.truth.segments() {
            let seg_rms = rms((seg.onset_s * sr) as usize, (seg.end_s() * sr) as usize);
            assert!(
                seg_rms >= 5.0 * silence_rms.max(1e-12),
                "segment rms {seg_rms} vs silence {silence_rms}"
            );
        }
    }
}
