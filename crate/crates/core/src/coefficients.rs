//! Frozen per-edge diffusion coefficients derived from the guide.
//!
//! For a 4-neighbour edge `(p, n)` the conductance is
//! `κ² / (κ² + ‖g_p − g_n‖²)`, the norm running over every guide channel.
//! Each undirected edge is stored once, in one of two planes:
//!
//! * `horizontal[r * (W-1) + c]` joins `(r, c)` and `(r, c+1)`
//! * `vertical[r * W + c]` joins `(r, c)` and `(r+1, c)`

use rayon::prelude::*;

use crate::adjustment::nearest_upsample;
use crate::error::{Error, Result};
use crate::grid::{normalize_guide, validate_pair, DepthGrid, GuideStack, ScaleFactor};
use crate::scalar::Real;

/// Contrast scale used with raw RGB guides normalized to `[0, 1]`.
pub const DEFAULT_KAPPA: f64 = 0.03;

#[derive(Clone, Debug, PartialEq)]
pub struct CoefficientField<T> {
    height: usize,
    width: usize,
    horizontal: Vec<T>,
    vertical: Vec<T>,
    kappa: Option<f64>,
}

impl<T: Real> CoefficientField<T> {
    /// Builds a field from explicit edge planes; every value must lie in `(0, 1]`.
    pub fn from_planes(height: usize, width: usize, horizontal: Vec<T>, vertical: Vec<T>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::dims(format!("empty coefficient field {height}x{width}")));
        }
        if horizontal.len() != height * (width - 1) || vertical.len() != (height - 1) * width {
            return Err(Error::dims(format!(
                "edge planes of {} and {} values do not fit a {height}x{width} grid",
                horizontal.len(),
                vertical.len()
            )));
        }
        let in_range = |c: &T| *c > T::zero() && *c <= T::one();
        if !horizontal.iter().chain(&vertical).all(in_range) {
            return Err(Error::InvalidConfig("edge coefficients must lie in (0, 1]".into()));
        }
        Ok(CoefficientField {
            height,
            width,
            horizontal,
            vertical,
            kappa: None,
        })
    }

    /// Every edge set to `value`; `uniform(h, w, 1)` is plain isotropic diffusion.
    pub fn uniform(height: usize, width: usize, value: T) -> Result<Self> {
        Self::from_planes(
            height,
            width,
            vec![value; height * width.saturating_sub(1)],
            vec![value; height.saturating_sub(1) * width],
        )
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

    /// `H × (W−1)` plane of left-right edges.
    #[inline]
    pub fn horizontal(&self) -> &[T] {
        &self.horizontal
    }

    /// `(H−1) × W` plane of up-down edges.
    #[inline]
    pub fn vertical(&self) -> &[T] {
        &self.vertical
    }

    /// The contrast scale the field was computed with, if it came from a guide.
    pub fn kappa(&self) -> Option<f64> {
        self.kappa
    }

    /// Coefficient between `(row, col)` and its right neighbour.
    #[inline]
    pub fn east(&self, row: usize, col: usize) -> T {
        self.horizontal[row * (self.width - 1) + col]
    }

    /// Coefficient between `(row, col)` and the pixel below it.
    #[inline]
    pub fn south(&self, row: usize, col: usize) -> T {
        self.vertical[row * self.width + col]
    }

    pub fn cast<U: Real>(&self) -> CoefficientField<U> {
        let conv = |v: &Vec<T>| v.iter().map(|c| U::of(c.as_f64())).collect();
        CoefficientField {
            height: self.height,
            width: self.width,
            horizontal: conv(&self.horizontal),
            vertical: conv(&self.vertical),
            kappa: self.kappa,
        }
    }
}

#[inline]
fn conductance<T: Real>(a: &[T], b: &[T], kappa_sq: T) -> T {
    let dist_sq = a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| {
        let d = x - y;
        acc + d * d
    });
    kappa_sq / (kappa_sq + dist_sq)
}

/// Computes the coefficient field for `guide` once; the result is immutable.
pub fn compute_coefficients<T: Real>(guide: &GuideStack<T>, kappa: f64) -> Result<CoefficientField<T>> {
    if !(kappa > 0.0 && kappa.is_finite()) {
        return Err(Error::InvalidKappa(kappa));
    }
    let (h, w, ch) = (guide.height(), guide.width(), guide.channels());
    let kappa_sq = T::of(kappa * kappa);
    let g = guide.values();

    let mut horizontal = vec![T::zero(); h * (w - 1)];
    if w > 1 {
        horizontal.par_chunks_mut(w - 1).enumerate().for_each(|(r, row)| {
            for (c, out) in row.iter_mut().enumerate() {
                let p = (r * w + c) * ch;
                *out = conductance(&g[p..p + ch], &g[p + ch..p + 2 * ch], kappa_sq);
            }
        });
    }
    let mut vertical = vec![T::zero(); (h - 1) * w];
    vertical.par_chunks_mut(w).enumerate().for_each(|(r, row)| {
        for (c, out) in row.iter_mut().enumerate() {
            let p = (r * w + c) * ch;
            let q = p + w * ch;
            *out = conductance(&g[p..p + ch], &g[q..q + ch], kappa_sq);
        }
    });

    Ok(CoefficientField {
        height: h,
        width: w,
        horizontal,
        vertical,
        kappa: Some(kappa),
    })
}

/// Returns the normalized guide with one extra channel: the nearest-neighbour
/// upsampled source divided by its largest valid value. Gaps in the source
/// take their nearest valid neighbour's value first.
pub fn append_source_channel<T: Real>(
    guide: &GuideStack<T>,
    source: &DepthGrid<T>,
    s: ScaleFactor,
) -> Result<GuideStack<T>> {
    validate_pair(source, guide, s)?;
    let peak = source
        .valid_values()
        .fold(None, |m: Option<T>, v| Some(m.map_or(v, |m| m.max(v))))
        .ok_or(Error::EmptySource)?;
    let filled = source.fill_gaps_nearest()?;
    let up = nearest_upsample(&filled, s);
    let plane: Vec<T> = up.values().iter().map(|&v| v / peak).collect();
    normalize_guide(guide).with_channel(&plane)
}
