//! Shared on-disk formats: the FMAT binary matrix container, the corpus
//! manifest, and the structured text training config.

use std::fs;
use std::path::{Path, PathBuf};

use crate::train::{TrainConfig, TrainMode};
use crate::{Error, Result};

pub const FMAT_MAGIC: &[u8; 5] = b"FMAT1";

/// Row-major f64 matrix: magic "FMAT1", u32 rows, u32 cols, little-endian
/// f64 payload of rows·cols entries.
#[derive(Debug, Clone, PartialEq)]
pub struct Fmat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Fmat {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::InvalidInput(format!(
                "fmat payload holds {} values but {rows}×{cols} were declared",
                data.len()
            )));
        }
        Ok(Fmat { rows, cols, data })
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(13 + self.data.len() * 8);
        out.extend_from_slice(FMAT_MAGIC);
        out.extend_from_slice(&(self.rows as u32).to_le_bytes());
        out.extend_from_slice(&(self.cols as u32).to_le_bytes());
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Fmat> {
        if bytes.len() < 13 {
            return Err(Error::FileFormat("fmat: file shorter than its header".into()));
        }
        if &bytes[0..5] != FMAT_MAGIC {
            return Err(Error::FileFormat("fmat: bad magic".into()));
        }
        let rows = u32::from_le_bytes(bytes[5..9].try_into().unwrap()) as usize;
        let cols = u32::from_le_bytes(bytes[9..13].try_into().unwrap()) as usize;
        let need = 13 + rows * cols * 8;
        if bytes.len() != need {
            return Err(Error::FileFormat(format!(
                "fmat: expected {need} bytes for {rows}×{cols}, found {}",
                bytes.len()
            )));
        }
        let data: Vec<f64> = bytes[13..]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(Fmat { rows, cols, data })
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path.as_ref(), self.encode())?;
        Ok(())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Fmat> {
        Fmat::decode(&fs::read(path.as_ref())?)
    }
}

/// One corpus manifest row; the file is tab-separated with one session per
/// line: id, wav path, rttm path, speaker count, beta, seed.
#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub session_id: String,
    pub wav_path: PathBuf,
    pub rttm_path: PathBuf,
    pub num_speakers: usize,
    pub beta_s: f64,
    pub seed: u64,
}

pub fn write_manifest(entries: &[ManifestEntry]) -> String {
    let mut out = String::new();
    for e in entries {
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\t{}\n",
            e.session_id,
            e.wav_path.display(),
            e.rttm_path.display(),
            e.num_speakers,
            e.beta_s,
            e.seed
        ));
    }
    out
}

pub fn parse_manifest(text: &str) -> Result<Vec<ManifestEntry>> {
    let mut out = Vec::new();
    let mut seen = std::collections::BTreeSet::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 6 {
            return Err(Error::FileFormat(format!(
                "manifest line {}: expected 6 tab-separated fields, found {}",
                idx + 1,
                fields.len()
            )));
        }
        let entry = ManifestEntry {
            session_id: fields[0].to_string(),
            wav_path: PathBuf::from(fields[1]),
            rttm_path: PathBuf::from(fields[2]),
            num_speakers: fields[3].parse().map_err(|_| {
                Error::FileFormat(format!("manifest line {}: bad speaker count", idx + 1))
            })?,
            beta_s: fields[4].parse().map_err(|_| {
                Error::FileFormat(format!("manifest line {}: bad beta", idx + 1))
            })?,
            seed: fields[5].parse().map_err(|_| {
                Error::FileFormat(format!("manifest line {}: bad seed", idx + 1))
            })?,
        };
        if !seen.insert(entry.session_id.clone()) {
            return Err(Error::FileFormat(format!(
                "manifest line {}: duplicate session id `{}`",
                idx + 1,
                entry.session_id
            )));
        }
        out.push(entry);
    }
    Ok(out)
}

/// Serializes a training config as `key = value` lines.
pub fn write_train_config(c: &TrainConfig) -> String {
    format!(
        "mode = {}\nbatch_size = {}\nnoam_factor = {}\nwarmup = {}\nmax_steps = {}\nchunk_frames = {}\nrep_source_global_ratio = {}\nseed = {}\ncheckpoint_every = {}\n",
        match c.mode {
            TrainMode::JointZvector => "zvector",
            TrainMode::ExternalReps => "external",
        },
        c.batch_size,
        c.noam_factor,
        c.warmup,
        c.max_steps,
        c.chunk_frames,
        c.rep_source_global_ratio,
        c.seed,
        c.checkpoint_every,
    )
}

/// Parses `key = value` lines into a training config, starting from the
/// defaults. Unknown keys are errors.
pub fn parse_train_config(text: &str) -> Result<TrainConfig> {
    let mut c = TrainConfig::default();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::FileFormat(format!("config line {}: expected `key = value`", idx + 1))
        })?;
        let (key, value) = (key.trim(), value.trim());
        let bad = |what: &str| {
            Error::FileFormat(format!("config line {}: bad {what} `{value}`", idx + 1))
        };
        match key {
            "mode" => {
                c.mode = match value {
                    "zvector" => TrainMode::JointZvector,
                    "external" => TrainMode::ExternalReps,
                    _ => return Err(bad("mode")),
                }
            }
            "batch_size" => c.batch_size = value.parse().map_err(|_| bad("batch_size"))?,
            "noam_factor" => c.noam_factor = value.parse().map_err(|_| bad("noam_factor"))?,
            "warmup" => c.warmup = value.parse().map_err(|_| bad("warmup"))?,
            "max_steps" => c.max_steps = value.parse().map_err(|_| bad("max_steps"))?,
            "chunk_frames" => c.chunk_frames = value.parse().map_err(|_| bad("chunk_frames"))?,
            "rep_source_global_ratio" => {
                c.rep_source_global_ratio =
                    value.parse().map_err(|_| bad("rep_source_global_ratio"))?
            }
            "seed" => c.seed = value.parse().map_err(|_| bad("seed"))?,
            "checkpoint_every" => {
                c.checkpoint_every = value.parse().map_err(|_| bad("checkpoint_every"))?
            }
            _ => {
                return Err(Error::FileFormat(format!(
                    "config line {}: unknown key `{key}`",
                    idx + 1
                )))
            }
        }
    }
    if !(0.0..=1.0).contains(&c.rep_source_global_ratio) {
        return Err(Error::InvalidInput("rep_source_global_ratio must be in [0,1]".into()));
    }
    if c.batch_size < 1 {
        return Err(Error::InvalidInput("batch_size must be >= 1".into()));
    }
    Ok(c)
}
