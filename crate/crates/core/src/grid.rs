//! Dense row-major grids for depth and guide data.
//!
//! A [`DepthGrid`] holds one depth value per pixel plus an optional validity
//! plane; a [`GuideStack`] holds `C` interleaved channels per pixel. Both are
//! immutable once built: every operation in the crate returns a fresh grid.

use std::collections::VecDeque;
use std::fmt;

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Integer resampling factor between a source grid and its target.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ScaleFactor(usize);

impl ScaleFactor {
    pub fn new(s: usize) -> Result<Self> {
        if s == 0 {
            return Err(Error::InvalidScale(s));
        }
        Ok(ScaleFactor(s))
    }

    #[inline]
    pub fn get(self) -> usize {
        self.0
    }

    /// Low-resolution dimensions of a `height × width` grid, if divisible.
    pub fn reduce(self, height: usize, width: usize) -> Result<(usize, usize)> {
        let s = self.0;
        if height % s != 0 || width % s != 0 {
            return Err(Error::dims(format!("{height}x{width} is not divisible by scale {s}")));
        }
        Ok((height / s, width / s))
    }
}

impl fmt::Display for ScaleFactor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A 2D depth map with an optional validity mask (`true` = valid).
///
/// Values at invalid pixels are carried along but never read by any numeric
/// routine; they may hold anything, including NaN.
#[derive(Clone, Debug, PartialEq)]
pub struct DepthGrid<T> {
    height: usize,
    width: usize,
    values: Vec<T>,
    mask: Option<Vec<bool>>,
}

impl<T: Real> DepthGrid<T> {
    pub fn new(height: usize, width: usize, values: Vec<T>) -> Result<Self> {
        Self::build(height, width, values, None)
    }

    pub fn with_mask(height: usize, width: usize, values: Vec<T>, mask: Vec<bool>) -> Result<Self> {
        Self::build(height, width, values, Some(mask))
    }

    fn build(height: usize, width: usize, values: Vec<T>, mask: Option<Vec<bool>>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::dims(format!("empty grid {height}x{width}")));
        }
        let n = height
            .checked_mul(width)
            .ok_or_else(|| Error::dims(format!("grid {height}x{width} overflows")))?;
        if values.len() != n {
            return Err(Error::dims(format!(
                "{height}x{width} grid needs {n} values, got {}",
                values.len()
            )));
        }
        if let Some(m) = &mask {
            if m.len() != n {
                return Err(Error::dims(format!("mask has {} entries, expected {n}", m.len())));
            }
        }
        let grid = DepthGrid {
            height,
            width,
            values,
            mask,
        };
        if let Some(i) = (0..n).find(|&i| grid.is_valid_index(i) && !grid.values[i].is_finite()) {
            return Err(Error::NonFiniteInput(format!(
                "depth value at ({}, {}) is {}",
                i / width,
                i % width,
                grid.values[i]
            )));
        }
        Ok(grid)
    }

    pub fn filled(height: usize, width: usize, value: T) -> Result<Self> {
        Self::new(height, width, vec![value; height.saturating_mul(width)])
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> T) -> Result<Self> {
        let mut values = Vec::with_capacity(height.saturating_mul(width));
        for r in 0..height {
            for c in 0..width {
                values.push(f(r, c));
            }
        }
        Self::new(height, width, values)
    }

    /// Internal constructor for buffers produced by the crate's own kernels.
    pub(crate) fn from_parts(height: usize, width: usize, values: Vec<T>, mask: Option<Vec<bool>>) -> Self {
        debug_assert_eq!(values.len(), height * width);
        DepthGrid {
            height,
            width,
            values,
            mask,
        }
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.values.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Row-major values, including the (meaningless) values under the mask.
    #[inline]
    pub fn values(&self) -> &[T] {
        &self.values
    }

    #[inline]
    pub fn mask(&self) -> Option<&[bool]> {
        self.mask.as_deref()
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> T {
        self.values[row * self.width + col]
    }

    #[inline]
    pub fn is_valid(&self, row: usize, col: usize) -> bool {
        self.is_valid_index(row * self.width + col)
    }

    #[inline]
    pub fn is_valid_index(&self, i: usize) -> bool {
        self.mask.as_ref().map_or(true, |m| m[i])
    }

    pub fn valid_count(&self) -> usize {
        self.mask
            .as_ref()
            .map_or(self.len(), |m| m.iter().filter(|&&v| v).count())
    }

    /// True when there is no mask or the mask marks every pixel valid.
    pub fn is_fully_valid(&self) -> bool {
        self.mask.as_ref().map_or(true, |m| m.iter().all(|&v| v))
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    pub fn without_mask(&self) -> Result<Self> {
        Self::new(self.height, self.width, self.values.clone())
    }

    /// Replaces the mask. Pixels newly marked valid must hold finite values.
    pub fn masked(self, mask: Option<Vec<bool>>) -> Result<Self> {
        Self::build(self.height, self.width, self.values, mask)
    }

    pub fn cast<U: Real>(&self) -> DepthGrid<U> {
        DepthGrid {
            height: self.height,
            width: self.width,
            values: self.values.iter().map(|v| U::of(v.as_f64())).collect(),
            mask: self.mask.clone(),
        }
    }

    /// Applies `f` to every value; the mask is kept.
    pub fn map(&self, f: impl Fn(T) -> T) -> Result<Self> {
        Self::build(
            self.height,
            self.width,
            self.values.iter().map(|&v| f(v)).collect(),
            self.mask.clone(),
        )
    }

    /// Iterator over the values of valid pixels, in row-major order.
    pub fn valid_values(&self) -> impl Iterator<Item = T> + '_ {
        self.values
            .iter()
            .enumerate()
            .filter(move |(i, _)| self.is_valid_index(*i))
            .map(|(_, &v)| v)
    }

    /// Mean over valid pixels, accumulated in `f64`.
    pub fn valid_mean(&self) -> Option<f64> {
        let (sum, n) = self
            .valid_values()
            .fold((0.0f64, 0usize), |(s, n), v| (s + v.as_f64(), n + 1));
        (n > 0).then(|| sum / n as f64)
    }

    /// Checks the positivity precondition of the adjustment step.
    pub fn require_positive(&self) -> Result<()> {
        for i in 0..self.len() {
            if self.is_valid_index(i) && !(self.values[i] > T::zero()) {
                return Err(Error::NonPositiveSource {
                    row: i / self.width,
                    col: i % self.width,
                    value: self.values[i].as_f64(),
                });
            }
        }
        Ok(())
    }

    /// Dense copy where every invalid pixel takes the value of the nearest
    /// valid pixel (4-connected breadth-first distance; ties go to the pixel
    /// reached first in row-major seeding order). The result has no mask.
    pub fn fill_gaps_nearest(&self) -> Result<Self> {
        let Some(mask) = &self.mask else {
            return Ok(DepthGrid::from_parts(
                self.height,
                self.width,
                self.values.clone(),
                None,
            ));
        };
        let (h, w) = self.dims();
        let mut filled = vec![false; self.len()];
        let mut out = vec![T::zero(); self.len()];
        let mut queue = VecDeque::new();
        for i in 0..self.len() {
            if mask[i] {
                filled[i] = true;
                out[i] = self.values[i];
                queue.push_back(i);
            }
        }
        if queue.is_empty() {
            return Err(Error::EmptySource);
        }
        while let Some(i) = queue.pop_front() {
            let (r, c) = (i / w, i % w);
            let neighbors = [
                (c > 0).then(|| i - 1),
                (c + 1 < w).then(|| i + 1),
                (r > 0).then(|| i - w),
                (r + 1 < h).then(|| i + w),
            ];
            for n in neighbors.into_iter().flatten() {
                if !filled[n] {
                    filled[n] = true;
                    out[n] = out[i];
                    queue.push_back(n);
                }
            }
        }
        Ok(DepthGrid::from_parts(h, w, out, None))
    }
}

/// How guide samples were encoded before entering the pipeline.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default)]
pub enum SampleEncoding {
    /// Real-valued data (already normalized, or feature activations).
    #[default]
    Float,
    /// 8-bit integer counts, 0..=255.
    U8,
    /// 16-bit integer counts, 0..=65535.
    U16,
}

/// An `H × W × C` guide image stored pixel-interleaved.
#[derive(Clone, Debug, PartialEq)]
pub struct GuideStack<T> {
    height: usize,
    width: usize,
    channels: usize,
    values: Vec<T>,
    encoding: SampleEncoding,
}

impl<T: Real> GuideStack<T> {
    pub fn new(height: usize, width: usize, channels: usize, values: Vec<T>, encoding: SampleEncoding) -> Result<Self> {
        if height == 0 || width == 0 || channels == 0 {
            return Err(Error::dims(format!("empty guide {height}x{width}x{channels}")));
        }
        let n = height
            .checked_mul(width)
            .and_then(|n| n.checked_mul(channels))
            .ok_or_else(|| Error::dims("guide size overflows"))?;
        if values.len() != n {
            return Err(Error::dims(format!(
                "{height}x{width}x{channels} guide needs {n} values, got {}",
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            let px = i / channels;
            return Err(Error::NonFiniteInput(format!(
                "guide channel {} at ({}, {}) is {}",
                i % channels,
                px / width,
                px % width,
                values[i]
            )));
        }
        Ok(GuideStack {
            height,
            width,
            channels,
            values,
            encoding,
        })
    }

    /// Single-channel float guide from a per-pixel function.
    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> T) -> Result<Self> {
        let mut values = Vec::with_capacity(height.saturating_mul(width));
        for r in 0..height {
            for c in 0..width {
                values.push(f(r, c));
            }
        }
        Self::new(height, width, 1, values, SampleEncoding::Float)
    }

    /// Builds a float guide from channel planes of equal size.
    pub fn from_planes(height: usize, width: usize, planes: &[Vec<T>]) -> Result<Self> {
        let channels = planes.len();
        let n = height.saturating_mul(width);
        if let Some(p) = planes.iter().find(|p| p.len() != n) {
            return Err(Error::dims(format!("plane of {} values, expected {n}", p.len())));
        }
        let mut values = Vec::with_capacity(n * channels);
        for i in 0..n {
            values.extend(planes.iter().map(|p| p[i]));
        }
        Self::new(height, width, channels, values, SampleEncoding::Float)
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn channels(&self) -> usize {
        self.channels
    }

    #[inline]
    pub fn encoding(&self) -> SampleEncoding {
        self.encoding
    }

    /// Pixel-interleaved values.
    #[inline]
    pub fn values(&self) -> &[T] {
        &self.values
    }

    #[inline]
    pub fn pixel(&self, row: usize, col: usize) -> &[T] {
        let start = (row * self.width + col) * self.channels;
        &self.values[start..start + self.channels]
    }

    /// Copy of one channel as a row-major plane.
    pub fn plane(&self, channel: usize) -> Vec<T> {
        self.values
            .iter()
            .skip(channel)
            .step_by(self.channels)
            .copied()
            .collect()
    }

    pub fn cast<U: Real>(&self) -> GuideStack<U> {
        GuideStack {
            height: self.height,
            width: self.width,
            channels: self.channels,
            values: self.values.iter().map(|v| U::of(v.as_f64())).collect(),
            encoding: self.encoding,
        }
    }

    /// Appends one channel plane. The result is float-encoded, so integer
    /// guides must be normalized first.
    pub fn with_channel(&self, plane: &[T]) -> Result<Self> {
        if self.encoding != SampleEncoding::Float {
            return Err(Error::InvalidConfig(
                "normalize an integer-encoded guide before appending channels".into(),
            ));
        }
        let n = self.height * self.width;
        if plane.len() != n {
            return Err(Error::dims(format!(
                "appended plane has {} values, expected {n}",
                plane.len()
            )));
        }
        let c = self.channels;
        let mut values = Vec::with_capacity(n * (c + 1));
        for (px, &extra) in self.values.chunks_exact(c).zip(plane) {
            values.extend_from_slice(px);
            values.push(extra);
        }
        Self::new(self.height, self.width, c + 1, values, SampleEncoding::Float)
    }
}

/// Maps integer-encoded channels onto `[0, 1]` (`v/255` or `v/65535`);
/// float guides pass through unchanged, so the operation is idempotent.
pub fn normalize_guide<T: Real>(raw: &GuideStack<T>) -> GuideStack<T> {
    let full_scale = match raw.encoding {
        SampleEncoding::Float => return raw.clone(),
        SampleEncoding::U8 => T::of(255.0),
        SampleEncoding::U16 => T::of(65535.0),
    };
    GuideStack {
        values: raw.values.iter().map(|&v| v / full_scale).collect(),
        encoding: SampleEncoding::Float,
        ..*raw
    }
}

/// Checks that `guide` is an `s`-times enlargement of `source` and that the
/// source is usable by the multiplicative adjustment.
pub fn validate_pair<T: Real>(source: &DepthGrid<T>, guide: &GuideStack<T>, s: ScaleFactor) -> Result<()> {
    let k = s.get();
    let expected = (source.height().checked_mul(k), source.width().checked_mul(k));
    if expected != (Some(guide.height()), Some(guide.width())) {
        return Err(Error::dims(format!(
            "guide is {}x{}, expected {}x{} for a {}x{} source at scale {k}",
            guide.height(),
            guide.width(),
            source.height().saturating_mul(k),
            source.width().saturating_mul(k),
            source.height(),
            source.width(),
        )));
    }
    // finiteness of both grids is a constructor invariant
    source.require_positive()
}
