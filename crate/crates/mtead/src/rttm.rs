//! RTTM parsing/serialization and the conversion between time-interval
//! segment lists and frame-level binary speaker masks.
//!
//! Frame membership is decided at frame centers: frame t belongs to a
//! segment iff (t + 0.5)·shift lies inside it. This makes the mask↔segment
//! conversions exact inverses of each other.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::{Error, Result};

/// One speaker-labeled time interval.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub recording_id: String,
    pub speaker: String,
    pub onset_s: f64,
    pub duration_s: f64,
}

impl Segment {
    pub fn end_s(&self) -> f64 {
        self.onset_s + self.duration_s
    }
}

/// Segments of one recording, sorted by onset then speaker.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SegmentList {
    segments: Vec<Segment>,
}

impl SegmentList {
    pub fn new(mut segments: Vec<Segment>) -> Self {
        sort_segments(&mut segments);
        SegmentList { segments }
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn push(&mut self, seg: Segment) {
        self.segments.push(seg);
        sort_segments(&mut self.segments);
    }

    /// Distinct speakers ordered by first onset, ties lexicographic.
    pub fn speakers_by_onset(&self) -> Vec<String> {
        let mut first: BTreeMap<&str, f64> = BTreeMap::new();
        for s in &self.segments {
            let e = first.entry(s.speaker.as_str()).or_insert(s.onset_s);
            if s.onset_s < *e {
                *e = s.onset_s;
            }
        }
        let mut out: Vec<(&str, f64)> = first.into_iter().collect();
        out.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then(a.0.cmp(b.0)));
        out.into_iter().map(|(s, _)| s.to_string()).collect()
    }

    pub fn max_end_s(&self) -> f64 {
        self.segments.iter().map(|s| s.end_s()).fold(0.0, f64::max)
    }
}

fn sort_segments(segments: &mut [Segment]) {
    segments.sort_by(|a, b| {
        a.onset_s
            .partial_cmp(&b.onset_s)
            .unwrap()
            .then_with(|| a.speaker.cmp(&b.speaker))
            .then_with(|| a.duration_s.partial_cmp(&b.duration_s).unwrap())
    });
}

/// N×T binary occurrence labels with the speakers ordered by first onset.
#[derive(Debug, Clone, PartialEq)]
pub struct SpeakerMask {
    pub speakers: Vec<String>,
    mask: Vec<u8>, // row-major N×T
    pub num_frames: usize,
    pub frame_shift_s: f64,
}

impl SpeakerMask {
    pub fn new(speakers: Vec<String>, num_frames: usize, frame_shift_s: f64) -> Self {
        let n = speakers.len();
        debug_assert!(
            speakers.iter().collect::<std::collections::BTreeSet<_>>().len() == n,
            "speaker ids must be unique"
        );
        SpeakerMask { speakers, mask: vec![0; n * num_frames], num_frames, frame_shift_s }
    }

    pub fn num_speakers(&self) -> usize {
        self.speakers.len()
    }

    pub fn row(&self, i: usize) -> &[u8] {
        &self.mask[i * self.num_frames..(i + 1) * self.num_frames]
    }

    pub fn set(&mut self, speaker: usize, frame: usize, value: bool) {
        self.mask[speaker * self.num_frames + frame] = value as u8;
    }

    pub fn get(&self, speaker: usize, frame: usize) -> bool {
        self.mask[speaker * self.num_frames + frame] != 0
    }

    /// Indices of the active frames of one speaker row.
    pub fn active_frames(&self, speaker: usize) -> Vec<usize> {
        self.row(speaker)
            .iter()
            .enumerate()
            .filter_map(|(t, &v)| (v != 0).then_some(t))
            .collect()
    }
}

/// Parses RTTM text into per-recording segment lists. Blank lines and lines
/// starting with `#` are skipped; any other malformed line is an error that
/// names its line number.
pub fn parse_rttm(text: &str) -> Result<BTreeMap<String, SegmentList>> {
    let mut out: BTreeMap<String, Vec<Segment>> = BTreeMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 10 {
            return Err(Error::RttmParse {
                line: line_no,
                message: format!("expected 10 fields, found {}", fields.len()),
            });
        }
        if fields[0] != "SPEAKER" {
            return Err(Error::RttmParse {
                line: line_no,
                message: format!("unsupported record type `{}`", fields[0]),
            });
        }
        let onset: f64 = fields[3].parse().map_err(|_| Error::RttmParse {
            line: line_no,
            message: format!("bad onset `{}`", fields[3]),
        })?;
        let duration: f64 = fields[4].parse().map_err(|_| Error::RttmParse {
            line: line_no,
            message: format!("bad duration `{}`", fields[4]),
        })?;
        if onset < 0.0 {
            return Err(Error::RttmParse {
                line: line_no,
                message: format!("negative onset {onset}"),
            });
        }
        if duration <= 0.0 {
            return Err(Error::RttmParse {
                line: line_no,
                message: format!("non-positive duration {duration}"),
            });
        }
        out.entry(fields[1].to_string()).or_default().push(Segment {
            recording_id: fields[1].to_string(),
            speaker: fields[7].to_string(),
            onset_s: onset,
            duration_s: duration,
        });
    }
    Ok(out.into_iter().map(|(k, v)| (k, SegmentList::new(v))).collect())
}

/// Serializes a segment list as RTTM with times rounded to 3 decimals.
pub fn write_rttm(list: &SegmentList) -> String {
    let mut out = String::new();
    for s in list.segments() {
        let _ = writeln!(
            out,
            "SPEAKER {} 1 {:.3} {:.3} <NA> <NA> {} <NA> <NA>",
            s.recording_id, s.onset_s, s.duration_s, s.speaker
        );
    }
    out
}

/// Rasterizes segments onto a frame grid: frame t is active for a speaker
/// iff the frame center (t + 0.5)·shift falls inside one of that speaker's
/// segments. Speakers are ordered by first onset (ties lexicographic).
pub fn segments_to_mask(
    list: &SegmentList,
    frame_shift_s: f64,
    total_frames: usize,
) -> SpeakerMask {
    let speakers = list.speakers_by_onset();
    let index: BTreeMap<&str, usize> =
        speakers.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
    let mut mask = SpeakerMask::new(speakers.clone(), total_frames, frame_shift_s);
    for seg in list.segments() {
        let row = index[seg.speaker.as_str()];
        // Centers inside [onset, onset+duration): onset <= (t+0.5)·shift < end.
        let first = (seg.onset_s / frame_shift_s - 0.5).ceil().max(0.0) as usize;
        for t in first..total_frames {
            let center = (t as f64 + 0.5) * frame_shift_s;
            if center >= seg.end_s() {
                break;
            }
            if center >= seg.onset_s {
                mask.set(row, t, true);
            }
        }
    }
    mask
}

/// Converts maximal runs of active frames back into segments. Inverse of
/// [`segments_to_mask`] on any binary mask.
pub fn mask_to_segments(mask: &SpeakerMask, recording_id: &str) -> SegmentList {
    let mut segments = Vec::new();
    for (i, speaker) in mask.speakers.iter().enumerate() {
        let row = mask.row(i);
        let mut t = 0;
        while t < mask.num_frames {
            if row[t] != 0 {
                let start = t;
                while t < mask.num_frames && row[t] != 0 {
                    t += 1;
                }
                segments.push(Segment {
                    recording_id: recording_id.to_string(),
                    speaker: speaker.clone(),
                    onset_s: start as f64 * mask.frame_shift_s,
                    duration_s: (t - start) as f64 * mask.frame_shift_s,
                });
            } else {
                t += 1;
            }
        }
    }
    SegmentList::new(segments)
}
