//! Log-spectrogram features.
//!
//! A crop of `n` samples becomes an `(n_fft/2 + 1) x floor(n / hop)` matrix:
//! frame `t` starts at `t * hop`, is zero-padded past the end of the crop,
//! Hamming-windowed, zero-padded to `n_fft` and transformed. With the
//! defaults (64 ms window, 32 ms hop, 1024 points, 16 kHz, 4 s crops) this
//! is 513 x 125.

mod cache;

pub use cache::{read_cache, read_cache_raw, write_cache, CACHE_MAGIC, CACHE_VERSION};

use std::f64::consts::PI;
use std::sync::Arc;

use ndarray::Array2;
use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::sampling::SampleCrop;
use crate::{Error, Label, Result};

pub const DEFAULT_LOG_EPSILON: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StftConfig {
    pub window_s: f64,
    pub hop_s: f64,
    pub n_fft: usize,
    /// Floor added to magnitudes before the logarithm.
    pub log_epsilon: f64,
}

impl Default for StftConfig {
    fn default() -> Self {
        Self {
            window_s: 0.064,
            hop_s: 0.032,
            n_fft: 1024,
            log_epsilon: DEFAULT_LOG_EPSILON,
        }
    }
}

impl StftConfig {
    pub fn window_len(&self, sample_rate: u32) -> usize {
        (self.window_s * sample_rate as f64).round() as usize
    }

    pub fn hop_len(&self, sample_rate: u32) -> usize {
        (self.hop_s * sample_rate as f64).round() as usize
    }

    pub fn n_freq(&self) -> usize {
        self.n_fft / 2 + 1
    }

    pub fn n_frames(&self, n_samples: usize, sample_rate: u32) -> usize {
        n_samples / self.hop_len(sample_rate).max(1)
    }

    pub fn validate(&self, sample_rate: u32) -> Result<()> {
        let win = self.window_len(sample_rate);
        if win < 2 {
            return Err(Error::InvalidArgument(format!("window of {win} samples is too short")));
        }
        if win > self.n_fft {
            return Err(Error::InvalidArgument(format!(
                "window of {win} samples exceeds n_fft = {}",
                self.n_fft
            )));
        }
        if self.hop_len(sample_rate) == 0 {
            return Err(Error::InvalidArgument("hop must be at least one sample".into()));
        }
        if !(self.log_epsilon > 0.0) {
            return Err(Error::InvalidArgument("log epsilon must be positive".into()));
        }
        Ok(())
    }
}

/// `w[i] = 0.54 - 0.46 cos(2 pi i / (n - 1))`.
pub fn hamming_window(n: usize) -> Result<Vec<f64>> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!("Hamming window needs n >= 2, got {n}")));
    }
    let d = (n - 1) as f64;
    Ok((0..n).map(|i| 0.54 - 0.46 * (2.0 * PI * i as f64 / d).cos()).collect())
}

/// Reusable STFT for one configuration and sample rate.
pub struct Stft {
    window: Vec<f64>,
    hop: usize,
    n_fft: usize,
    fft: Arc<dyn Fft<f64>>,
}

impl Stft {
    pub fn new(cfg: &StftConfig, sample_rate: u32) -> Result<Self> {
        cfg.validate(sample_rate)?;
        Ok(Self {
            window: hamming_window(cfg.window_len(sample_rate))?,
            hop: cfg.hop_len(sample_rate),
            n_fft: cfg.n_fft,
            fft: FftPlanner::new().plan_fft_forward(cfg.n_fft),
        })
    }

    /// Non-negative-frequency half of the spectrum, frequency rows by time columns.
    pub fn process(&self, samples: &[f32]) -> Result<Array2<Complex64>> {
        let win = self.window.len();
        if samples.len() < win {
            return Err(Error::InvalidArgument(format!(
                "signal of {} samples is shorter than the {win}-sample window",
                samples.len()
            )));
        }
        let n_frames = samples.len() / self.hop;
        let n_freq = self.n_fft / 2 + 1;
        let mut out = Array2::zeros((n_freq, n_frames));
        let mut buf = vec![Complex64::new(0.0, 0.0); self.n_fft];
        for t in 0..n_frames {
            let start = t * self.hop;
            buf.fill(Complex64::new(0.0, 0.0));
            let end = (start + win).min(samples.len());
            for (i, &s) in samples[start..end].iter().enumerate() {
                buf[i].re = s as f64 * self.window[i];
            }
            self.fft.process(&mut buf);
            for (k, z) in buf.iter().take(n_freq).enumerate() {
                out[[k, t]] = *z;
            }
        }
        Ok(out)
    }
}

pub fn stft(crop: &SampleCrop, cfg: &StftConfig) -> Result<Array2<Complex64>> {
    Stft::new(cfg, crop.sample_rate)?.process(&crop.samples)
}

/// Elementwise `ln(|z| + epsilon)`.
pub fn log_magnitude(spec: &Array2<Complex64>, epsilon: f64) -> Array2<f64> {
    spec.mapv(|z| (z.norm() + epsilon).ln())
}

/// Affine map onto `[0, 1]`. A constant matrix maps to zeros.
pub fn minmax_normalize(m: &Array2<f64>) -> Array2<f64> {
    let (lo, hi) = m
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let range = hi - lo;
    if !(range > 0.0) {
        return Array2::zeros(m.raw_dim());
    }
    m.mapv(|v| (v - lo) / range)
}

/// Log-spectrogram of one crop, frequency rows by time columns.
#[derive(Debug, Clone, PartialEq)]
pub struct LogSpectrogram {
    pub values: Array2<f64>,
    pub speaker_id: String,
    pub crop_index: u32,
    pub label: Option<Label>,
    pub normalized: bool,
}

impl LogSpectrogram {
    pub fn dims(&self) -> (usize, usize) {
        self.values.dim()
    }

    pub fn normalize(mut self) -> Self {
        if !self.normalized {
            self.values = minmax_normalize(&self.values);
            self.normalized = true;
        }
        self
    }
}

/// Log-magnitude spectrogram before normalization.
pub fn featurize_raw_with(stft: &Stft, crop: &SampleCrop, epsilon: f64) -> Result<LogSpectrogram> {
    let spec = stft.process(&crop.samples)?;
    Ok(LogSpectrogram {
        values: log_magnitude(&spec, epsilon),
        speaker_id: crop.speaker_id.clone(),
        crop_index: crop.crop_index,
        label: crop.label,
        normalized: false,
    })
}

/// `minmax_normalize(log_magnitude(stft(crop)))`.
pub fn featurize(crop: &SampleCrop, cfg: &StftConfig) -> Result<LogSpectrogram> {
    let stft = Stft::new(cfg, crop.sample_rate)?;
    Ok(featurize_raw_with(&stft, crop, cfg.log_epsilon)?.normalize())
}

/// Featurize many crops in parallel, keeping input order. When `normalize`
/// is false the raw log-magnitudes are returned, as stored in the cache.
pub fn featurize_all(crops: &[SampleCrop], cfg: &StftConfig, normalize: bool) -> Result<Vec<LogSpectrogram>> {
    let Some(first) = crops.first() else {
        return Ok(Vec::new());
    };
    let rate = first.sample_rate;
    if let Some(c) = crops.iter().find(|c| c.sample_rate != rate) {
        return Err(Error::InvalidArgument(format!(
            "crop {}#{} has rate {} Hz, expected {rate} Hz",
            c.speaker_id, c.crop_index, c.sample_rate
        )));
    }
    let stft = Stft::new(cfg, rate)?;
    crops
        .par_iter()
        .map(|c| {
            let raw = featurize_raw_with(&stft, c, cfg.log_epsilon)?;
            Ok(if normalize { raw.normalize() } else { raw })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    fn crop_of(samples: Vec<f32>, rate: u32) -> SampleCrop {
        SampleCrop {
            speaker_id: "s".into(),
            crop_index: 0,
            samples,
            sample_rate: rate,
            label: Some(Label::Depressed),
        }
    }

    #[test]
    fn hamming_closed_form() {
        let w = hamming_window(3).unwrap();
        assert_abs_diff_eq!(w[0], 0.08, epsilon = 1e-15);
        assert_abs_diff_eq!(w[1], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(w[2], 0.08, epsilon = 1e-15);
        let w = hamming_window(1024).unwrap();
        assert_abs_diff_eq!(w[0], 0.08, epsilon = 1e-15);
        assert_abs_diff_eq!(w[1023], 0.08, epsilon = 1e-15);
        for i in 0..1024 {
            assert_abs_diff_eq!(w[i], w[1023 - i], epsilon = 1e-12);
        }
        assert!(hamming_window(1).is_err());
    }

    #[test]
    fn default_dimensions() {
        let crop = crop_of(vec![0.1; 64_000], 16_000);
        let s = stft(&crop, &StftConfig::default()).unwrap();
        assert_eq!(s.dim(), (513, 125));
    }

    #[test]
    fn silence_gives_zero_spectrum() {
        let s = stft(&crop_of(vec![0.0; 8000], 16_000), &StftConfig::default()).unwrap();
        assert!(s.iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn bin_centred_tone_peaks_at_its_bin() {
        let k = 37usize;
        let fs = 16_000.0;
        let f = k as f64 * fs / 1024.0;
        let x: Vec<f32> = (0..16_000).map(|i| (2.0 * PI * f * i as f64 / fs).sin() as f32).collect();
        let s = stft(&crop_of(x, 16_000), &StftConfig::default()).unwrap();
        let full_frames = (16_000 - 1024) / 512 + 1;
        for t in 0..full_frames {
            let col = s.column(t);
            let argmax = (0..col.len()).max_by(|&a, &b| col[a].norm().total_cmp(&col[b].norm())).unwrap();
            assert_eq!(argmax, k, "frame {t}");
        }
    }

    #[test]
    fn rejects_bad_configs() {
        let crop = crop_of(vec![0.0; 500], 16_000);
        assert!(stft(&crop, &StftConfig::default()).is_err());
        let long_window = StftConfig {
            window_s: 0.128,
            ..StftConfig::default()
        };
        assert!(stft(&crop_of(vec![0.0; 64_000], 16_000), &long_window).is_err());
        let zero_hop = StftConfig {
            hop_s: 0.0,
            ..StftConfig::default()
        };
        assert!(zero_hop.validate(16_000).is_err());
    }

    #[test]
    fn log_magnitude_values() {
        let m = array![[
            Complex64::new(0.0, 0.0),
            Complex64::new(0.6, 0.8),
            Complex64::new(std::f64::consts::E - 1e-10, 0.0)
        ]];
        let l = log_magnitude(&m, 1e-10);
        assert_abs_diff_eq!(l[[0, 0]], -23.025_850_929_940_457, epsilon = 1e-9);
        assert_abs_diff_eq!(l[[0, 1]], 1e-10, epsilon = 1e-15);
        assert_abs_diff_eq!(l[[0, 2]], 1.0, epsilon = 1e-15);
    }

    #[test]
    fn minmax_examples() {
        let out = minmax_normalize(&array![[1.0, 3.0], [2.0, 4.0]]);
        let expect = array![[0.0, 2.0 / 3.0], [1.0 / 3.0, 1.0]];
        for (a, b) in out.iter().zip(expect.iter()) {
            assert_abs_diff_eq!(*a, *b, epsilon = 1e-15);
        }
        assert!(minmax_normalize(&Array2::from_elem((3, 2), 7.5)).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn featurize_is_scale_invariant_on_tones() {
        let fs = 16_000.0;
        let x: Vec<f32> = (0..64_000)
            .map(|i| {
                let t = i as f64 / fs;
                (0.3 * (2.0 * PI * 220.0 * t).sin() + 0.1 * (2.0 * PI * 440.0 * t).sin() + 0.01) as f32
            })
            .collect();
        let x2: Vec<f32> = x.iter().map(|v| v * 2.0).collect();
        let cfg = StftConfig::default();
        let a = featurize(&crop_of(x, 16_000), &cfg).unwrap();
        let b = featurize(&crop_of(x2, 16_000), &cfg).unwrap();
        assert_eq!(a.dims(), (513, 125));
        assert!(a.normalized);
        // ln(2|z| + eps) - ln(|z| + eps) = ln 2 up to eps/|z|
        let max_diff = a.values.iter().zip(b.values.iter()).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
        assert!(max_diff < 1e-6, "{max_diff}");
        assert_eq!(a, featurize(&a_crop_again(), &cfg).unwrap());
    }

    fn a_crop_again() -> SampleCrop {
        let fs = 16_000.0;
        crop_of(
            (0..64_000)
                .map(|i| {
                    let t = i as f64 / fs;
                    (0.3 * (2.0 * PI * 220.0 * t).sin() + 0.1 * (2.0 * PI * 440.0 * t).sin() + 0.01) as f32
                })
                .collect(),
            16_000,
        )
    }

    #[test]
    fn featurize_all_preserves_order() {
        let crops: Vec<SampleCrop> = (0..4)
            .map(|i| SampleCrop {
                crop_index: i,
                ..crop_of((0..4000).map(|j| ((j * (i as usize + 1)) as f32).sin()).collect(), 16_000)
            })
            .collect();
        let all = featurize_all(&crops, &StftConfig::default(), true).unwrap();
        for (c, f) in crops.iter().zip(&all) {
            assert_eq!(f, &featurize(c, &StftConfig::default()).unwrap());
        }
    }
}
