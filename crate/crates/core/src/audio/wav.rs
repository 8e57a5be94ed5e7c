//! RIFF/WAVE, PCM format code 1, 16-bit little-endian, mono or stereo.

use std::path::Path;

use super::AudioClip;
use crate::{Error, Result};

const PCM: u16 = 1;

struct Format {
    channels: u16,
    sample_rate: u32,
}

fn read_u16(b: &[u8], at: usize) -> u16 {
    u16::from_le_bytes([b[at], b[at + 1]])
}

fn read_u32(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes([b[at], b[at + 1], b[at + 2], b[at + 3]])
}

/// Read a WAV file into a clip. The speaker id defaults to the file stem.
pub fn load_wav(path: impl AsRef<Path>) -> Result<AudioClip> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let speaker = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    parse_wav(&bytes, speaker)
}

pub fn parse_wav(bytes: &[u8], speaker_id: impl Into<String>) -> Result<AudioClip> {
    if bytes.len() < 12 {
        return Err(Error::MalformedHeader(format!("file is {} bytes, too short for RIFF", bytes.len())));
    }
    if &bytes[0..4] != b"RIFF" {
        return Err(Error::MalformedHeader("missing RIFF tag".into()));
    }
    if &bytes[8..12] != b"WAVE" {
        return Err(Error::MalformedHeader("missing WAVE tag".into()));
    }

    let mut format: Option<Format> = None;
    let mut pos = 12;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = read_u32(bytes, pos + 4) as usize;
        let body = pos + 8;
        match id {
            b"fmt " => {
                if size < 16 || body + 16 > bytes.len() {
                    return Err(Error::MalformedHeader(format!("fmt chunk of {size} bytes")));
                }
                let code = read_u16(bytes, body);
                let channels = read_u16(bytes, body + 2);
                let sample_rate = read_u32(bytes, body + 4);
                let bits = read_u16(bytes, body + 14);
                if code != PCM {
                    return Err(Error::UnsupportedEncoding(format!("format code {code}, only PCM (1) is supported")));
                }
                if bits != 16 {
                    return Err(Error::UnsupportedEncoding(format!("{bits}-bit samples, only 16-bit is supported")));
                }
                if channels != 1 && channels != 2 {
                    return Err(Error::UnsupportedEncoding(format!("{channels} channels, expected mono or stereo")));
                }
                if sample_rate == 0 {
                    return Err(Error::MalformedHeader("sample rate is zero".into()));
                }
                format = Some(Format { channels, sample_rate });
            }
            b"data" => {
                let fmt = format
                    .as_ref()
                    .ok_or_else(|| Error::MalformedHeader("data chunk precedes fmt chunk".into()))?;
                if body + size > bytes.len() {
                    return Err(Error::MalformedHeader(format!(
                        "data chunk declares {size} bytes but only {} remain",
                        bytes.len() - body
                    )));
                }
                let frame_bytes = 2 * fmt.channels as usize;
                let payload = &bytes[body..body + size - size % frame_bytes];
                if payload.is_empty() {
                    return Err(Error::EmptyPayload);
                }
                let samples = decode_frames(payload, fmt.channels);
                return AudioClip::new(samples, fmt.sample_rate, speaker_id, None);
            }
            _ => {}
        }
        // chunks are word aligned
        pos = body + size + (size & 1);
    }
    if format.is_none() {
        Err(Error::MalformedHeader("no fmt chunk".into()))
    } else {
        Err(Error::MalformedHeader("no data chunk".into()))
    }
}

fn decode_frames(payload: &[u8], channels: u16) -> Vec<f32> {
    let scale = |lo: u8, hi: u8| i16::from_le_bytes([lo, hi]) as f32 / 32768.0;
    match channels {
        1 => payload.chunks_exact(2).map(|b| scale(b[0], b[1])).collect(),
        _ => payload
            .chunks_exact(4)
            .map(|b| 0.5 * (scale(b[0], b[1]) + scale(b[2], b[3])))
            .collect(),
    }
}

/// Encode a clip as 16-bit mono PCM. Amplitudes are rounded and saturated.
pub fn encode_wav(clip: &AudioClip) -> Vec<u8> {
    let data_len = clip.samples.len() * 2;
    let mut out = Vec::with_capacity(44 + data_len);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&((36 + data_len) as u32).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&PCM.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&clip.sample_rate.to_le_bytes());
    out.extend_from_slice(&(clip.sample_rate * 2).to_le_bytes());
    out.extend_from_slice(&2u16.to_le_bytes());
    out.extend_from_slice(&16u16.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&(data_len as u32).to_le_bytes());
    for &s in &clip.samples {
        let q = (s as f64 * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
        out.extend_from_slice(&q.to_le_bytes());
    }
    out
}

pub fn write_wav(clip: &AudioClip, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_wav(clip)).map_err(|e| Error::io(path, e))
}
