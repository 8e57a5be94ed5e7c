//! Model file layout (little-endian):
//!
//! ```text
//! "SDM1" | version u16 | f0 t0 filters pool_kernel pool_stride pool_padding hidden (u32 each)
//! | W1 b1 W4 b4 Wout bout (f64 each) | crc32 of all preceding bytes
//! ```

use std::path::Path;

use super::{Architecture, NetworkConfig, NetworkParams};
use crate::{Error, Result};

pub const MODEL_MAGIC: &[u8; 4] = b"SDM1";
pub const MODEL_VERSION: u16 = 1;
const HEADER_LEN: usize = 4 + 2 + 7 * 4;

pub fn encode_model(params: &NetworkParams) -> Vec<u8> {
    let cfg = params.config();
    let mut out = Vec::with_capacity(HEADER_LEN + params.len() * 8 + 4);
    out.extend_from_slice(MODEL_MAGIC);
    out.extend_from_slice(&MODEL_VERSION.to_le_bytes());
    let a = &cfg.arch;
    for v in [cfg.f0, cfg.t0, a.filters, a.pool_kernel, a.pool_stride, a.pool_padding, a.hidden] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    for v in params.as_slice() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

pub fn decode_model(bytes: &[u8]) -> Result<NetworkParams> {
    if bytes.len() < HEADER_LEN + 4 {
        return Err(Error::ModelFormat(format!("{} bytes is too short", bytes.len())));
    }
    if &bytes[..4] != MODEL_MAGIC {
        return Err(Error::ModelFormat("bad magic".into()));
    }
    let (body, tail) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(tail.try_into().unwrap());
    let actual = crc32fast::hash(body);
    if stored != actual {
        return Err(Error::ModelFormat(format!("checksum mismatch: stored {stored:08x}, computed {actual:08x}")));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != MODEL_VERSION {
        return Err(Error::ModelFormat(format!("unsupported version {version}")));
    }
    let field = |i: usize| u32::from_le_bytes(bytes[6 + 4 * i..10 + 4 * i].try_into().unwrap()) as usize;
    let cfg = NetworkConfig::new(
        field(0),
        field(1),
        Architecture {
            filters: field(2),
            pool_kernel: field(3),
            pool_stride: field(4),
            pool_padding: field(5),
            hidden: field(6),
        },
    )
    .map_err(|e| Error::ModelFormat(format!("bad configuration: {e}")))?;
    let payload = &body[HEADER_LEN..];
    if payload.len() != cfg.param_count() * 8 {
        return Err(Error::ModelFormat(format!(
            "expected {} parameters, found {} bytes",
            cfg.param_count(),
            payload.len()
        )));
    }
    let data = payload
        .chunks_exact(8)
        .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
        .collect();
    NetworkParams::from_vec(cfg, data)
}

pub fn save_model(params: &NetworkParams, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_model(params)).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<NetworkParams> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_model(&bytes).map_err(|e| match e {
        Error::ModelFormat(m) => Error::ModelFormat(format!("{}: {m}", path.display())),
        other => other,
    })
}
