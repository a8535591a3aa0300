//! Block resampling and the multiplicative source-consistency step.
//!
//! Downsampling is the `s × s` block mean and upsampling is block
//! replication. With this pair the adjustment
//! `Y = Ŷ · up(S / down(Ŷ))` satisfies `down(Y) = S` exactly in real
//! arithmetic, because every pixel of a block is scaled by the same ratio.
//! Block sums are accumulated in `f64` in row-major order within the block.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{DepthGrid, ScaleFactor};
use crate::scalar::Real;

/// Smallest block mean the adjustment will divide by.
pub const MIN_BLOCK_MEAN: f64 = 1e-12;

fn check_pair<T: Real>(hr: &DepthGrid<T>, lr: &DepthGrid<T>, s: ScaleFactor) -> Result<()> {
    let k = s.get();
    if Some(hr.height()) != lr.height().checked_mul(k) || Some(hr.width()) != lr.width().checked_mul(k) {
        return Err(Error::dims(format!(
            "{}x{} target is not scale {k} of {}x{} source",
            hr.height(),
            hr.width(),
            lr.height(),
            lr.width()
        )));
    }
    Ok(())
}

/// Mean of the valid pixels of the block at LR `(br, bc)`, or `None` if the
/// block has none.
#[inline]
fn block_mean<T: Real>(
    values: &[T],
    mask: Option<&[bool]>,
    width: usize,
    s: usize,
    br: usize,
    bc: usize,
) -> Option<f64> {
    let mut sum = 0.0f64;
    let mut n = 0usize;
    for r in br * s..(br + 1) * s {
        let row = r * width;
        for c in bc * s..(bc + 1) * s {
            if mask.map_or(true, |m| m[row + c]) {
                sum += values[row + c].as_f64();
                n += 1;
            }
        }
    }
    (n > 0).then(|| sum / n as f64)
}

/// Area-average downsampling. With a mask, each block averages its valid
/// pixels and is marked invalid when it has none.
pub fn block_downsample<T: Real>(y: &DepthGrid<T>, s: ScaleFactor) -> Result<DepthGrid<T>> {
    let (lh, lw) = s.reduce(y.height(), y.width())?;
    let k = s.get();
    let mut values = Vec::with_capacity(lh * lw);
    let mut mask = Vec::with_capacity(lh * lw);
    for br in 0..lh {
        for bc in 0..lw {
            match block_mean(y.values(), y.mask(), y.width(), k, br, bc) {
                Some(m) => {
                    values.push(T::of(m));
                    mask.push(true);
                }
                None => {
                    values.push(T::zero());
                    mask.push(false);
                }
            }
        }
    }
    let mask = y.mask().is_some().then_some(mask);
    Ok(DepthGrid::from_parts(lh, lw, values, mask))
}

/// Replicates every pixel (and its validity) over an `s × s` block.
pub fn nearest_upsample<T: Real>(x: &DepthGrid<T>, s: ScaleFactor) -> DepthGrid<T> {
    let k = s.get();
    let (h, w) = (x.height() * k, x.width() * k);
    let expand = |r: usize, c: usize| (r / k) * x.width() + c / k;
    let values = (0..h * w).map(|i| x.values()[expand(i / w, i % w)]).collect();
    let mask = x.mask().map(|m| (0..h * w).map(|i| m[expand(i / w, i % w)]).collect());
    DepthGrid::from_parts(h, w, values, mask)
}

/// Per-block rescaling factors of one adjustment.
#[derive(Clone, Debug, PartialEq)]
pub struct AdjustmentRatios<T> {
    /// One ratio per source pixel; 1 where the source or the block is invalid.
    pub low: DepthGrid<T>,
    pub scale: ScaleFactor,
}

impl<T: Real> AdjustmentRatios<T> {
    /// The ratios replicated to target resolution.
    pub fn upsampled(&self) -> DepthGrid<T> {
        nearest_upsample(&self.low, self.scale)
    }
}

/// Ratio `S / mean` for one block; 1 when the block has no valid pixels.
#[inline]
fn block_ratio(mean: Option<f64>, target: f64, row: usize, col: usize) -> Result<f64> {
    let Some(mean) = mean else {
        return Ok(1.0);
    };
    if !(mean > MIN_BLOCK_MEAN) || !mean.is_finite() {
        return Err(Error::ZeroBlockMean { row, col, mean });
    }
    Ok(target / mean)
}

pub fn adjustment_ratios<T: Real>(
    y_hat: &DepthGrid<T>,
    source: &DepthGrid<T>,
    s: ScaleFactor,
) -> Result<AdjustmentRatios<T>> {
    check_pair(y_hat, source, s)?;
    let (lh, lw) = source.dims();
    let mut low = Vec::with_capacity(lh * lw);
    for br in 0..lh {
        for bc in 0..lw {
            let r = if source.is_valid(br, bc) {
                let mean = block_mean(y_hat.values(), y_hat.mask(), y_hat.width(), s.get(), br, bc);
                block_ratio(mean, source.get(br, bc).as_f64(), br, bc)?
            } else {
                1.0
            };
            low.push(T::of(r));
        }
    }
    Ok(AdjustmentRatios {
        low: DepthGrid::from_parts(lh, lw, low, None),
        scale: s,
    })
}

/// Rescales each block of `y_hat` so that its mean equals the source pixel.
///
/// Blocks over invalid source pixels are left unchanged, as are pixels the
/// target itself marks invalid.
pub fn adjust<T: Real>(y_hat: &DepthGrid<T>, source: &DepthGrid<T>, s: ScaleFactor) -> Result<DepthGrid<T>> {
    check_pair(y_hat, source, s)?;
    let mut values = y_hat.values().to_vec();
    adjust_in_place(&mut values, y_hat.mask(), y_hat.width(), source, s)?;
    Ok(DepthGrid::from_parts(
        y_hat.height(),
        y_hat.width(),
        values,
        y_hat.mask().map(<[bool]>::to_vec),
    ))
}

/// In-place adjustment, parallel over bands of `s` target rows. Each band
/// owns one source row, so every block is handled by exactly one worker.
pub(crate) fn adjust_in_place<T: Real>(
    values: &mut [T],
    mask: Option<&[bool]>,
    width: usize,
    source: &DepthGrid<T>,
    s: ScaleFactor,
) -> Result<()> {
    let k = s.get();
    values
        .par_chunks_mut(k * width)
        .enumerate()
        .try_for_each(|(br, band)| -> Result<()> {
            let band_mask = mask.map(|m| &m[br * k * width..(br + 1) * k * width]);
            for bc in 0..source.width() {
                if !source.is_valid(br, bc) {
                    continue;
                }
                if k == 1 {
                    // the ratio would be S/ŷ; assign directly to stay exact
                    if band_mask.map_or(true, |m| m[bc]) {
                        band[bc] = source.get(br, bc);
                    }
                    continue;
                }
                let mean = block_mean(band, band_mask, width, k, 0, bc);
                let ratio = block_ratio(mean, source.get(br, bc).as_f64(), br, bc)?;
                for r in 0..k {
                    for c in bc * k..(bc + 1) * k {
                        let i = r * width + c;
                        if band_mask.map_or(true, |m| m[i]) {
                            band[i] = T::of(band[i].as_f64() * ratio);
                        }
                    }
                }
            }
            Ok(())
        })
}

/// `max |down(y) − S| / |S|` over blocks where both are valid; 0 if there
/// are none.
pub fn consistency_residual<T: Real>(y: &DepthGrid<T>, source: &DepthGrid<T>, s: ScaleFactor) -> Result<f64> {
    check_pair(y, source, s)?;
    Ok(residual_of(y.values(), y.mask(), y.width(), source, s))
}

pub(crate) fn residual_of<T: Real>(
    values: &[T],
    mask: Option<&[bool]>,
    width: usize,
    source: &DepthGrid<T>,
    s: ScaleFactor,
) -> f64 {
    let mut worst = 0.0f64;
    for br in 0..source.height() {
        for bc in 0..source.width() {
            if !source.is_valid(br, bc) {
                continue;
            }
            if let Some(mean) = block_mean(values, mask, width, s.get(), br, bc) {
                let target = source.get(br, bc).as_f64();
                worst = worst.max((mean - target).abs() / target.abs());
            }
        }
    }
    worst
}
