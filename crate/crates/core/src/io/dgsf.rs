//! `DGSF` v1 feature-stack container.
//!
//! ```text
//! offset  size  field
//! 0       4     magic "DGSF"
//! 4       1     version = 1
//! 5       4     height   (u32 LE)
//! 9       4     width    (u32 LE)
//! 13      4     channels (u32 LE)
//! 17      4·C·H·W  f32 LE, channel-major, row-major within a channel
//! ```

use crate::error::{Error, Result};
use crate::grid::{GuideStack, SampleEncoding};
use crate::scalar::Real;

pub const MAGIC: &[u8; 4] = b"DGSF";
pub const VERSION: u8 = 1;
pub const HEADER_LEN: usize = 17;

fn corrupt(msg: impl Into<String>) -> Error {
    Error::CorruptFile(format!("DGSF: {}", msg.into()))
}

pub fn encode<T: Real>(guide: &GuideStack<T>) -> Result<Vec<u8>> {
    let (h, w, c) = (guide.height(), guide.width(), guide.channels());
    let field = |v: usize, name: &str| {
        u32::try_from(v).map_err(|_| Error::InvalidConfig(format!("{name} {v} does not fit a DGSF header")))
    };
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * h * w * c);
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    out.extend_from_slice(&field(h, "height")?.to_le_bytes());
    out.extend_from_slice(&field(w, "width")?.to_le_bytes());
    out.extend_from_slice(&field(c, "channels")?.to_le_bytes());
    for ch in 0..c {
        for v in guide.values().iter().skip(ch).step_by(c) {
            out.extend_from_slice(&(v.as_f64() as f32).to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode(bytes: &[u8]) -> Result<GuideStack<f32>> {
    if bytes.len() < HEADER_LEN {
        return Err(corrupt(format!("{} bytes is shorter than the header", bytes.len())));
    }
    if &bytes[..4] != MAGIC {
        return Err(Error::UnsupportedFormat("not a DGSF file".into()));
    }
    if bytes[4] != VERSION {
        return Err(Error::UnsupportedFormat(format!("DGSF version {}", bytes[4])));
    }
    let word = |at: usize| u32::from_le_bytes([bytes[at], bytes[at + 1], bytes[at + 2], bytes[at + 3]]) as usize;
    let (h, w, c) = (word(5), word(9), word(13));
    if h == 0 || w == 0 || c == 0 {
        return Err(corrupt(format!("empty stack {h}x{w}x{c}")));
    }
    let count = h
        .checked_mul(w)
        .and_then(|n| n.checked_mul(c))
        .ok_or_else(|| corrupt("dimensions overflow"))?;
    let payload = &bytes[HEADER_LEN..];
    if Some(payload.len()) != count.checked_mul(4) {
        return Err(corrupt(format!(
            "header promises {} payload bytes, found {}",
            count.saturating_mul(4),
            payload.len()
        )));
    }
    let plane = h * w;
    let mut values = vec![0.0f32; count];
    for (i, b) in payload.chunks_exact(4).enumerate() {
        let v = f32::from_le_bytes([b[0], b[1], b[2], b[3]]);
        if !v.is_finite() {
            return Err(corrupt(format!("non-finite value at payload index {i}")));
        }
        let (ch, px) = (i / plane, i % plane);
        values[px * c + ch] = v;
    }
    GuideStack::new(h, w, c, values, SampleEncoding::Float)
}
