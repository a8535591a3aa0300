//! Depth, guide, mask and feature-stack files.
//!
//! Readers sniff the format from the leading bytes; writers pick it from the
//! file extension. Supported:
//!
//! * depth: 16-bit grayscale PNG (raw counts, 0 = gap) and PFM
//! * guide: 8/16-bit PNG with 1–4 channels, PFM, and DGSF feature stacks
//! * mask: any grayscale PNG, non-zero = valid

pub mod dgsf;
mod pfm;

use std::fs;
use std::io::Cursor;
use std::path::Path;

use image::{DynamicImage, ImageError, ImageFormat};

use crate::error::{Error, Result};
use crate::grid::{normalize_guide, DepthGrid, GuideStack, SampleEncoding};
use crate::scalar::Real;

const PNG_MAGIC: &[u8] = b"\x89PNG\r\n\x1a\n";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Format {
    Png,
    Pfm,
    Dgsf,
}

fn sniff(bytes: &[u8]) -> Result<Format> {
    if bytes.starts_with(PNG_MAGIC) {
        Ok(Format::Png)
    } else if bytes.starts_with(b"Pf") || bytes.starts_with(b"PF") {
        Ok(Format::Pfm)
    } else if bytes.starts_with(dgsf::MAGIC) {
        Ok(Format::Dgsf)
    } else {
        Err(Error::UnsupportedFormat("unrecognized file signature".into()))
    }
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|source| Error::Io {
        path: path.to_owned(),
        source,
    })
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|source| Error::Io {
        path: path.to_owned(),
        source,
    })
}

fn extension(path: &Path) -> String {
    path.extension()
        .and_then(|e| e.to_str())
        .unwrap_or("")
        .to_ascii_lowercase()
}

fn png_error(e: ImageError) -> Error {
    match e {
        ImageError::Unsupported(u) => Error::UnsupportedFormat(u.to_string()),
        other => Error::CorruptFile(format!("PNG: {other}")),
    }
}

fn decode_png(bytes: &[u8]) -> Result<DynamicImage> {
    image::load_from_memory_with_format(bytes, ImageFormat::Png).map_err(png_error)
}

/// Decodes a depth map from memory; see [`read_depth`].
pub fn decode_depth(bytes: &[u8]) -> Result<DepthGrid<f32>> {
    match sniff(bytes)? {
        Format::Png => {
            let (w, h, counts): (u32, u32, Vec<u16>) = match decode_png(bytes)? {
                DynamicImage::ImageLuma16(img) => (img.width(), img.height(), img.into_raw()),
                DynamicImage::ImageLuma8(img) => (
                    img.width(),
                    img.height(),
                    img.into_raw().into_iter().map(u16::from).collect(),
                ),
                other => {
                    return Err(Error::UnsupportedFormat(format!(
                        "depth PNG must be grayscale, found {:?}",
                        other.color()
                    )))
                }
            };
            let mask = counts.iter().map(|&v| v != 0).collect();
            let values = counts.into_iter().map(f32::from).collect();
            DepthGrid::with_mask(h as usize, w as usize, values, mask)
        }
        Format::Pfm => {
            let p = pfm::decode(bytes)?;
            if p.channels != 1 {
                return Err(Error::UnsupportedFormat("depth PFM must be single-channel (Pf)".into()));
            }
            let mask = p.data.iter().map(|v| v.is_finite() && *v > 0.0).collect();
            DepthGrid::with_mask(p.height, p.width, p.data, mask)
        }
        Format::Dgsf => Err(Error::UnsupportedFormat("DGSF holds guides, not depth".into())),
    }
}

/// Reads a depth map.
///
/// PNG: raw 16-bit counts, 0 marks a gap. PFM: values as stored; non-finite
/// or non-positive values mark gaps. The returned grid always has a mask.
pub fn read_depth(path: impl AsRef<Path>) -> Result<DepthGrid<f32>> {
    decode_depth(&read_bytes(path.as_ref())?)
}

/// Encodes a depth map as PNG (`png = true`) or PFM.
///
/// PNG stores `round(v)` (half away from zero), which must lie in
/// `0..=65535`; gaps are stored as 0. PFM stores the `f32` value bit for bit,
/// with gaps written as 0.0 so they read back as gaps.
pub fn encode_depth<T: Real>(grid: &DepthGrid<T>, png: bool) -> Result<Vec<u8>> {
    let (h, w) = grid.dims();
    if png {
        let mut counts = Vec::with_capacity(grid.len());
        for i in 0..grid.len() {
            if !grid.is_valid_index(i) {
                counts.push(0u16);
                continue;
            }
            let v = grid.values()[i].as_f64();
            let r = v.round();
            if !(0.0..=65535.0).contains(&r) {
                return Err(Error::OutOfRange {
                    row: i / w,
                    col: i % w,
                    value: v,
                    format: "16-bit PNG",
                });
            }
            counts.push(r as u16);
        }
        let img = image::ImageBuffer::<image::Luma<u16>, _>::from_raw(w as u32, h as u32, counts)
            .ok_or_else(|| Error::dims("depth grid too large for PNG"))?;
        let mut out = Cursor::new(Vec::new());
        img.write_to(&mut out, ImageFormat::Png).map_err(png_error)?;
        Ok(out.into_inner())
    } else {
        let data: Vec<f32> = (0..grid.len())
            .map(|i| {
                if grid.is_valid_index(i) {
                    grid.values()[i].as_f64() as f32
                } else {
                    0.0
                }
            })
            .collect();
        Ok(pfm::encode_gray(w, h, &data))
    }
}

/// Writes a depth map; the format follows the extension (`.png` or `.pfm`).
pub fn write_depth<T: Real>(path: impl AsRef<Path>, grid: &DepthGrid<T>) -> Result<()> {
    let path = path.as_ref();
    let png = match extension(path).as_str() {
        "png" => true,
        "pfm" => false,
        other => return Err(Error::UnsupportedFormat(format!("depth output extension {other:?}"))),
    };
    write_bytes(path, &encode_depth(grid, png)?)
}

/// Decodes a guide from memory; see [`read_guide`].
pub fn decode_guide(bytes: &[u8]) -> Result<GuideStack<f32>> {
    match sniff(bytes)? {
        Format::Png => {
            let img = decode_png(bytes)?;
            let (w, h) = (img.width() as usize, img.height() as usize);
            let channels = img.color().channel_count() as usize;
            let (values, encoding): (Vec<f32>, _) = match img {
                DynamicImage::ImageLuma8(i) => (i.into_raw().into_iter().map(f32::from).collect(), SampleEncoding::U8),
                DynamicImage::ImageLumaA8(i) => (i.into_raw().into_iter().map(f32::from).collect(), SampleEncoding::U8),
                DynamicImage::ImageRgb8(i) => (i.into_raw().into_iter().map(f32::from).collect(), SampleEncoding::U8),
                DynamicImage::ImageRgba8(i) => (i.into_raw().into_iter().map(f32::from).collect(), SampleEncoding::U8),
                DynamicImage::ImageLuma16(i) => {
                    (i.into_raw().into_iter().map(f32::from).collect(), SampleEncoding::U16)
                }
                DynamicImage::ImageLumaA16(i) => {
                    (i.into_raw().into_iter().map(f32::from).collect(), SampleEncoding::U16)
                }
                DynamicImage::ImageRgb16(i) => (i.into_raw().into_iter().map(f32::from).collect(), SampleEncoding::U16),
                DynamicImage::ImageRgba16(i) => {
                    (i.into_raw().into_iter().map(f32::from).collect(), SampleEncoding::U16)
                }
                other => {
                    return Err(Error::UnsupportedFormat(format!(
                        "guide PNG color type {:?}",
                        other.color()
                    )))
                }
            };
            Ok(normalize_guide(&GuideStack::new(h, w, channels, values, encoding)?))
        }
        Format::Pfm => {
            let p = pfm::decode(bytes)?;
            GuideStack::new(p.height, p.width, p.channels, p.data, SampleEncoding::Float)
                .map_err(|e| Error::CorruptFile(format!("PFM guide: {e}")))
        }
        Format::Dgsf => dgsf::decode(bytes),
    }
}

/// Reads a guide. Integer PNGs are normalized to `[0, 1]`; PFM and DGSF
/// data is passed through unchanged.
pub fn read_guide(path: impl AsRef<Path>) -> Result<GuideStack<f32>> {
    decode_guide(&read_bytes(path.as_ref())?)
}

/// Writes `guide` as a DGSF v1 feature stack.
pub fn write_feature_stack<T: Real>(path: impl AsRef<Path>, guide: &GuideStack<T>) -> Result<()> {
    write_bytes(path.as_ref(), &dgsf::encode(guide)?)
}

/// A validity plane loaded from an image.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MaskPlane {
    pub height: usize,
    pub width: usize,
    pub valid: Vec<bool>,
}

pub fn decode_mask(bytes: &[u8]) -> Result<MaskPlane> {
    if sniff(bytes)? != Format::Png {
        return Err(Error::UnsupportedFormat("masks must be PNG".into()));
    }
    let img = decode_png(bytes)?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let valid = match img {
        DynamicImage::ImageLuma8(i) => i.into_raw().into_iter().map(|v| v != 0).collect(),
        DynamicImage::ImageLuma16(i) => i.into_raw().into_iter().map(|v| v != 0).collect(),
        other => {
            return Err(Error::UnsupportedFormat(format!(
                "mask PNG must be grayscale, found {:?}",
                other.color()
            )))
        }
    };
    Ok(MaskPlane {
        height: h,
        width: w,
        valid,
    })
}

/// Reads a grayscale PNG mask; non-zero pixels are valid.
pub fn read_mask(path: impl AsRef<Path>) -> Result<MaskPlane> {
    decode_mask(&read_bytes(path.as_ref())?)
}
