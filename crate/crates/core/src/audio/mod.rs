//! Audio input: 16-bit PCM WAV files, frame-energy silence trimming and a
//! synthetic labeled corpus.
//!
//! Input recordings are assumed to contain a single speaker. Interviewer
//! removal (diarization) has to happen upstream.

mod manifest;
mod synth;
mod wav;

pub use manifest::{CorpusManifest, ManifestEntry, Split};
pub use synth::{spectral_centroid, synth_clip, synth_corpus, synth_from_entry, synth_seed, synth_train_test, SynthConfig};
pub use wav::{encode_wav, load_wav, parse_wav, write_wav};

use crate::{Error, Label, Result};

pub const DEFAULT_SAMPLE_RATE: u32 = 16_000;
pub const DEFAULT_TRIM_FRAME_S: f64 = 0.1;
pub const DEFAULT_TRIM_FLOOR_DB: f64 = -60.0;

/// A mono waveform belonging to one speaker.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    /// Amplitudes, nominally in `[-1, 1]`.
    pub samples: Vec<f32>,
    pub sample_rate: u32,
    pub speaker_id: String,
    pub label: Option<Label>,
}

impl AudioClip {
    pub fn new(
        samples: Vec<f32>,
        sample_rate: u32,
        speaker_id: impl Into<String>,
        label: Option<Label>,
    ) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::InvalidArgument("sample rate must be positive".into()));
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(Error::InvalidArgument(format!("sample {i} is not finite")));
        }
        Ok(Self {
            samples,
            sample_rate,
            speaker_id: speaker_id.into(),
            label,
        })
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }
}

/// RMS level of a frame in dB relative to full scale. Silent frames give `-inf`.
pub fn frame_dbfs(frame: &[f32]) -> f64 {
    if frame.is_empty() {
        return f64::NEG_INFINITY;
    }
    let energy: f64 = frame.iter().map(|&s| (s as f64) * (s as f64)).sum();
    let rms = (energy / frame.len() as f64).sqrt();
    20.0 * rms.log10()
}

/// Drop every frame whose RMS level does not exceed `energy_floor_db`.
///
/// Frames are consecutive, non-overlapping and start at sample 0; a trailing
/// partial frame is judged on its own samples. Clips shorter than one frame
/// come back unchanged.
pub fn trim_silence(clip: &AudioClip, frame_s: f64, energy_floor_db: f64) -> Result<AudioClip> {
    if !(frame_s > 0.0) {
        return Err(Error::InvalidArgument(format!("frame length must be positive, got {frame_s}")));
    }
    let frame_len = ((frame_s * clip.sample_rate as f64).round() as usize).max(1);
    if clip.samples.len() < frame_len {
        return Ok(clip.clone());
    }
    let samples: Vec<f32> = clip
        .samples
        .chunks(frame_len)
        .filter(|frame| frame_dbfs(frame) > energy_floor_db)
        .flatten()
        .copied()
        .collect();
    Ok(AudioClip {
        samples,
        ..clip.clone()
    })
}
