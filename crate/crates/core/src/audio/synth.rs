//! Seedable synthetic corpus.
//!
//! Each speaker is a harmonic tone complex. Class identity is carried by the
//! fundamental band, the pitch jitter depth and the amplitude-modulation
//! rate: depressed speakers sit at 80-120 Hz with narrow jitter and slow
//! modulation, non-depressed speakers at 180-260 Hz with wider jitter and
//! faster modulation. White noise is added 30 dB below the tone level.

use std::f64::consts::TAU;

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{AudioClip, CorpusManifest, ManifestEntry, Split};
use crate::sampling::DEFAULT_CROP_S;
use crate::{rng, Error, Label, Result};

const SYNTH_PREFIX: &str = "synth:";
const MAX_HARMONIC_HZ: f64 = 4000.0;
const NOISE_DB: f64 = -30.0;
const PEAK_LEVEL: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub train_per_class: usize,
    pub test_per_class: usize,
    /// Upper bound of per-speaker duration; durations are uniform in `[d/2, d]`.
    pub duration_s: f64,
    pub sample_rate: u32,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            train_per_class: 31,
            test_per_class: 10,
            duration_s: 360.0,
            sample_rate: super::DEFAULT_SAMPLE_RATE,
        }
    }
}

struct Voice {
    f0: f64,
    jitter: f64,
    vibrato_hz: f64,
    vibrato_phase: f64,
    am_hz: f64,
    am_phase: f64,
    tilt: f64,
}

impl Voice {
    fn draw(label: Label, rng: &mut rng::Rng) -> Self {
        let (f0, jitter, am_hz) = match label {
            Label::Depressed => (rng.gen_range(80.0..120.0), 0.005, rng.gen_range(0.5..1.5)),
            Label::NonDepressed => (rng.gen_range(180.0..260.0), 0.02, rng.gen_range(3.0..6.0)),
        };
        Self {
            f0,
            jitter,
            vibrato_hz: rng.gen_range(4.0..6.0),
            vibrato_phase: rng.gen_range(0.0..TAU),
            am_hz,
            am_phase: rng.gen_range(0.0..TAU),
            tilt: rng.gen_range(0.8..1.2),
        }
    }
}

/// Render one synthetic speaker. Fully determined by its arguments.
pub fn synth_clip(
    speaker_id: &str,
    label: Label,
    duration_s: f64,
    sample_rate: u32,
    seed: u64,
) -> Result<AudioClip> {
    if !(duration_s > 0.0) || sample_rate == 0 {
        return Err(Error::InvalidArgument(format!(
            "synthetic clip needs positive duration and rate, got {duration_s} s at {sample_rate} Hz"
        )));
    }
    let mut rng = rng::seeded(rng::derive(seed, &[1]));
    let voice = Voice::draw(label, &mut rng);
    let sr = sample_rate as f64;
    let n = (duration_s * sr).round() as usize;

    let top = MAX_HARMONIC_HZ.min(0.45 * sr);
    let n_harm = ((top / (voice.f0 * (1.0 + voice.jitter))).floor() as usize).max(1);
    let amps: Vec<f64> = (1..=n_harm).map(|h| (h as f64).powf(-voice.tilt)).collect();
    let gain = PEAK_LEVEL / amps.iter().sum::<f64>();

    let mut tone = Vec::with_capacity(n);
    let mut phase = 0.0f64;
    for i in 0..n {
        let t = i as f64 / sr;
        let f = voice.f0 * (1.0 + voice.jitter * (TAU * voice.vibrato_hz * t + voice.vibrato_phase).sin());
        phase = (phase + TAU * f / sr) % TAU;
        // sin(h*phase) by the Chebyshev recurrence
        let c2 = 2.0 * phase.cos();
        let (mut prev, mut cur) = (0.0, phase.sin());
        let mut acc = 0.0;
        for &a in &amps {
            acc += a * cur;
            let next = c2 * cur - prev;
            prev = cur;
            cur = next;
        }
        let env = 0.55 + 0.45 * (TAU * voice.am_hz * t + voice.am_phase).sin();
        tone.push(gain * env * acc);
    }

    let rms = (tone.iter().map(|x| x * x).sum::<f64>() / n.max(1) as f64).sqrt();
    let noise_std = rms * 10f64.powf(NOISE_DB / 20.0);
    let mut noise_rng = rng::seeded(rng::derive(seed, &[2]));
    let samples = tone
        .into_iter()
        .map(|x| {
            let z: f64 = StandardNormal.sample(&mut noise_rng);
            (x + noise_std * z).clamp(-1.0, 1.0) as f32
        })
        .collect();
    AudioClip::new(samples, sample_rate, speaker_id, Some(label))
}

/// Recover the generator seed from a manifest path of the form `synth:<seed>`.
pub fn synth_seed(path: &str) -> Option<u64> {
    path.strip_prefix(SYNTH_PREFIX)?.parse().ok()
}

/// Regenerate a clip described by a synthetic manifest entry.
pub fn synth_from_entry(entry: &ManifestEntry, sample_rate: u32) -> Result<Option<AudioClip>> {
    match synth_seed(&entry.path) {
        Some(seed) => synth_clip(&entry.speaker_id, entry.label, entry.duration_s, sample_rate, seed).map(Some),
        None => Ok(None),
    }
}

fn generate(
    split: Split,
    n_per_class: usize,
    duration_s: f64,
    sample_rate: u32,
    seed: u64,
) -> Result<(Vec<ManifestEntry>, Vec<AudioClip>)> {
    let tag = match split {
        Split::Train => "tr",
        Split::Test => "te",
    };
    let mut entries = Vec::new();
    let mut clips = Vec::new();
    for label in [Label::NonDepressed, Label::Depressed] {
        for i in 0..n_per_class {
            let speaker_seed = rng::derive(seed, &[split as u64, label as u64, i as u64]);
            let mut dur_rng = rng::seeded(rng::derive(speaker_seed, &[0]));
            let d = dur_rng.gen_range(duration_s / 2.0..=duration_s);
            // quantize so the manifest value reproduces the sample count exactly
            let d = (d * sample_rate as f64).round() / sample_rate as f64;
            let id = format!("{tag}_{}{i:03}", if label == Label::Depressed { 'd' } else { 'n' });
            clips.push(synth_clip(&id, label, d, sample_rate, speaker_seed)?);
            entries.push(ManifestEntry {
                speaker_id: id,
                path: format!("{SYNTH_PREFIX}{speaker_seed}"),
                label,
                split,
                duration_s: d,
            });
        }
    }
    Ok((entries, clips))
}

fn check_args(n_per_class: usize, duration_s: f64, sample_rate: u32) -> Result<()> {
    if n_per_class < 1 {
        return Err(Error::InvalidArgument("need at least one speaker per class".into()));
    }
    if !(duration_s >= 2.0 * DEFAULT_CROP_S) {
        return Err(Error::InvalidArgument(format!(
            "duration {duration_s} s is shorter than two {DEFAULT_CROP_S} s crops"
        )));
    }
    if sample_rate == 0 {
        return Err(Error::InvalidArgument("sample rate must be positive".into()));
    }
    Ok(())
}

/// Generate `n_speakers_per_class` speakers of each class, all tagged `train`.
pub fn synth_corpus(
    n_speakers_per_class: usize,
    duration_s: f64,
    sample_rate: u32,
    seed: u64,
) -> Result<(CorpusManifest, Vec<AudioClip>)> {
    check_args(n_speakers_per_class, duration_s, sample_rate)?;
    let (entries, clips) = generate(Split::Train, n_speakers_per_class, duration_s, sample_rate, seed)?;
    Ok((CorpusManifest::new(entries)?, clips))
}

/// Generate disjoint train and test speaker groups from one seed.
pub fn synth_train_test(cfg: &SynthConfig, seed: u64) -> Result<(CorpusManifest, Vec<AudioClip>)> {
    check_args(cfg.train_per_class, cfg.duration_s, cfg.sample_rate)?;
    let (mut entries, mut clips) = generate(Split::Train, cfg.train_per_class, cfg.duration_s, cfg.sample_rate, seed)?;
    if cfg.test_per_class > 0 {
        let (e, c) = generate(Split::Test, cfg.test_per_class, cfg.duration_s, cfg.sample_rate, seed)?;
        entries.extend(e);
        clips.extend(c);
    }
    Ok((CorpusManifest::new(entries)?, clips))
}

/// Power-weighted mean frequency in Hz, averaged over 1024-sample frames.
pub fn spectral_centroid(clip: &AudioClip) -> f64 {
    const N: usize = 1024;
    let fft = rustfft::FftPlanner::<f64>::new().plan_fft_forward(N);
    let window = crate::features::hamming_window(N).expect("N >= 2");
    let (mut weighted, mut total) = (0.0, 0.0);
    let mut buf = vec![num_complex::Complex64::new(0.0, 0.0); N];
    for frame in clip.samples.chunks_exact(N) {
        for ((b, &s), w) in buf.iter_mut().zip(frame).zip(&window) {
            *b = num_complex::Complex64::new(s as f64 * w, 0.0);
        }
        fft.process(&mut buf);
        for (k, z) in buf.iter().take(N / 2 + 1).enumerate() {
            let p = z.norm_sqr();
            weighted += p * k as f64 * clip.sample_rate as f64 / N as f64;
            total += p;
        }
    }
    if total > 0.0 {
        weighted / total
    } else {
        0.0
    }
}
