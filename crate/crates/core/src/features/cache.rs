//! Binary feature cache.
//!
//! ```text
//! "LSPG" | version u16 | F0 u32 | T0 u32 | count u32
//! per crop: id_len u32 | speaker_id utf-8 | crop_index u32 | label u8 | F0*T0 f32
//! ```
//!
//! All integers and floats are little-endian; matrices are frequency-major.
//! Values are stored before normalization. Label 255 marks an unlabeled crop.

use std::io::Write;
use std::path::Path;

use ndarray::Array2;

use super::LogSpectrogram;
use crate::{Error, Label, Result};

pub const CACHE_MAGIC: &[u8; 4] = b"LSPG";
pub const CACHE_VERSION: u16 = 1;
const UNLABELED: u8 = 255;

pub fn encode_cache(features: &[LogSpectrogram]) -> Result<Vec<u8>> {
    let (f0, t0) = features.first().map_or((0, 0), LogSpectrogram::dims);
    let mut out = Vec::with_capacity(18 + features.len() * (f0 * t0 * 4 + 32));
    out.extend_from_slice(CACHE_MAGIC);
    out.extend_from_slice(&CACHE_VERSION.to_le_bytes());
    out.extend_from_slice(&(f0 as u32).to_le_bytes());
    out.extend_from_slice(&(t0 as u32).to_le_bytes());
    out.extend_from_slice(&(features.len() as u32).to_le_bytes());
    for f in features {
        if f.dims() != (f0, t0) {
            return Err(Error::shape(format!("{f0}x{t0}"), format!("{:?} for {}", f.dims(), f.speaker_id)));
        }
        let id = f.speaker_id.as_bytes();
        out.extend_from_slice(&(id.len() as u32).to_le_bytes());
        out.extend_from_slice(id);
        out.extend_from_slice(&f.crop_index.to_le_bytes());
        out.push(f.label.map_or(UNLABELED, Label::as_u8));
        for &v in f.values.iter() {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    Ok(out)
}

/// Write features through a temporary file and rename into place, so
/// readers never see a partial cache.
pub fn write_cache(path: impl AsRef<Path>, features: &[LogSpectrogram]) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_cache(features)?;
    let tmp = path.with_extension("lspg.tmp");
    let mut f = std::fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    f.write_all(&bytes).map_err(|e| Error::io(&tmp, e))?;
    f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::CacheFormat(format!("truncated at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

pub fn decode_cache(bytes: &[u8]) -> Result<Vec<LogSpectrogram>> {
    let mut c = Cursor { bytes, pos: 0 };
    if c.take(4)? != CACHE_MAGIC {
        return Err(Error::CacheFormat("bad magic".into()));
    }
    let version = u16::from_le_bytes(c.take(2)?.try_into().unwrap());
    if version != CACHE_VERSION {
        return Err(Error::CacheFormat(format!("unsupported version {version}")));
    }
    let f0 = c.u32()? as usize;
    let t0 = c.u32()? as usize;
    let count = c.u32()? as usize;
    let mut out = Vec::with_capacity(count.min(1 << 16));
    for _ in 0..count {
        let id_len = c.u32()? as usize;
        let speaker_id = std::str::from_utf8(c.take(id_len)?)
            .map_err(|e| Error::CacheFormat(format!("speaker id: {e}")))?
            .to_string();
        let crop_index = c.u32()?;
        let label = match c.take(1)?[0] {
            UNLABELED => None,
            v => Some(Label::from_u8(v).ok_or_else(|| Error::CacheFormat(format!("label byte {v}")))?),
        };
        let raw = c.take(f0 * t0 * 4)?;
        let values: Vec<f64> = raw
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()) as f64)
            .collect();
        out.push(LogSpectrogram {
            values: Array2::from_shape_vec((f0, t0), values).expect("length checked"),
            speaker_id,
            crop_index,
            label,
            normalized: false,
        });
    }
    if c.pos != bytes.len() {
        return Err(Error::CacheFormat(format!("{} trailing bytes", bytes.len() - c.pos)));
    }
    Ok(out)
}

/// Stored (unnormalized) values.
pub fn read_cache_raw(path: impl AsRef<Path>) -> Result<Vec<LogSpectrogram>> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_cache(&bytes).map_err(|e| match e {
        Error::CacheFormat(m) => Error::CacheFormat(format!("{}: {m}", path.display())),
        other => other,
    })
}

/// Cached features, min-max normalized per crop.
pub fn read_cache(path: impl AsRef<Path>) -> Result<Vec<LogSpectrogram>> {
    Ok(read_cache_raw(path)?.into_iter().map(LogSpectrogram::normalize).collect())
}
