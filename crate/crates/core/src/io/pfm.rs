//! Portable float map: `Pf` (1 channel) or `PF` (3 channels), text header,
//! rows stored bottom to top. The sign of the scale field selects the byte
//! order; files are always written little-endian.

use crate::error::{Error, Result};

pub(crate) struct Pfm {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    /// Top-to-bottom, pixel-interleaved.
    pub data: Vec<f32>,
}

fn corrupt(msg: impl Into<String>) -> Error {
    Error::CorruptFile(format!("PFM: {}", msg.into()))
}

/// Reads one whitespace-delimited header token starting at `*pos`.
fn token<'a>(bytes: &'a [u8], pos: &mut usize) -> Result<&'a str> {
    while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
        if *pos - start > 32 {
            return Err(corrupt("header token too long"));
        }
    }
    if start == *pos {
        return Err(corrupt("truncated header"));
    }
    std::str::from_utf8(&bytes[start..*pos]).map_err(|_| corrupt("header is not ASCII"))
}

pub(crate) fn decode(bytes: &[u8]) -> Result<Pfm> {
    let mut pos = 0;
    let channels = match token(bytes, &mut pos)? {
        "Pf" => 1,
        "PF" => 3,
        other => return Err(Error::UnsupportedFormat(format!("PFM magic {other:?}"))),
    };
    let dim = |t: &str| -> Result<usize> {
        match t.parse::<usize>() {
            Ok(0) | Err(_) => Err(corrupt(format!("bad dimension {t:?}"))),
            Ok(v) => Ok(v),
        }
    };
    let width = dim(token(bytes, &mut pos)?)?;
    let height = dim(token(bytes, &mut pos)?)?;
    let scale: f64 = token(bytes, &mut pos)?
        .parse()
        .map_err(|_| corrupt("bad scale field"))?;
    if scale == 0.0 || !scale.is_finite() {
        return Err(corrupt("scale must be non-zero"));
    }
    let little_endian = scale < 0.0;
    // exactly one whitespace byte separates the header from the raster
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err(corrupt("missing raster"));
    }
    pos += 1;

    let count = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(channels))
        .ok_or_else(|| corrupt("dimensions overflow"))?;
    let raster = &bytes[pos..];
    if Some(raster.len()) != count.checked_mul(4) {
        return Err(corrupt(format!(
            "expected {} raster bytes, found {}",
            count.saturating_mul(4),
            raster.len()
        )));
    }

    let row_len = width * channels;
    let mut data = vec![0.0f32; count];
    for (file_row, chunk) in raster.chunks_exact(row_len * 4).enumerate() {
        let dst = &mut data[(height - 1 - file_row) * row_len..][..row_len];
        for (d, b) in dst.iter_mut().zip(chunk.chunks_exact(4)) {
            let b = [b[0], b[1], b[2], b[3]];
            *d = if little_endian {
                f32::from_le_bytes(b)
            } else {
                f32::from_be_bytes(b)
            };
        }
    }
    Ok(Pfm {
        width,
        height,
        channels,
        data,
    })
}

/// Encodes a single-channel map, top-to-bottom input, little-endian output.
pub(crate) fn encode_gray(width: usize, height: usize, data: &[f32]) -> Vec<u8> {
    debug_assert_eq!(data.len(), width * height);
    let mut out = format!("Pf\n{width} {height}\n-1.0\n").into_bytes();
    out.reserve(data.len() * 4);
    for row in data.chunks_exact(width).rev() {
        for v in row {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}
