//! Kernels for the target stored as an offset from the upsampled source.
//!
//! The loop keeps `V = Y − U`, where `U` is the nearest-neighbour upsampling
//! of the gap-filled source and is never materialized. Near equilibrium `V`
//! is small next to `Y`, so its rounding step is finer, and updates that
//! would be lost against `Y` in 32-bit storage still land. Inside a block
//! `U` is constant and the diffusion differences reduce to those of `V`.

use rayon::prelude::*;

use crate::adjustment::MIN_BLOCK_MEAN;
use crate::coefficients::CoefficientField;
use crate::error::{Error, Result};
use crate::grid::DepthGrid;
use crate::scalar::Real;

pub(super) struct Reference<'a, T> {
    low: &'a [T],
    low_width: usize,
    k: usize,
    width: usize,
}

impl<'a, T: Real> Reference<'a, T> {
    pub fn new(filled: &'a DepthGrid<T>, k: usize) -> Self {
        Reference {
            low: filled.values(),
            low_width: filled.width(),
            k,
            width: filled.width() * k,
        }
    }

    fn row(&self, r: usize) -> &[T] {
        let br = r / self.k;
        &self.low[br * self.low_width..(br + 1) * self.low_width]
    }

    fn width(&self) -> usize {
        self.width
    }

    /// `V = Y − U`.
    pub fn offset_of(&self, y: &[T]) -> Vec<T> {
        let w = self.width();
        y.iter()
            .enumerate()
            .map(|(i, v)| T::of(v.as_f64() - self.row(i / w)[i % w / self.k].as_f64()))
            .collect()
    }

    /// `Y = U + V`, rounded once per pixel.
    pub fn materialize(&self, v: &[T]) -> Vec<T> {
        let w = self.width();
        let mut out = vec![T::zero(); v.len()];
        out.par_chunks_mut(w)
            .zip(v.par_chunks(w))
            .enumerate()
            .for_each(|(r, (out, v))| {
                let u = self.row(r);
                for c in 0..w {
                    out[c] = T::of(u[c / self.k].as_f64() + v[c].as_f64());
                }
            });
        out
    }

    /// One diffusion step of `U + src` followed by the block adjustment,
    /// written to `dst` as an offset.
    ///
    /// Bands of `k` rows are processed independently; each band is diffused
    /// into an `f64` scratch row set, rescaled, and rounded to `T` once.
    pub fn step(
        &self,
        src: &[T],
        dst: &mut [T],
        coeffs: &CoefficientField<T>,
        lambda: f64,
        source: &DepthGrid<T>,
    ) -> Result<()> {
        let w = coeffs.width();
        let k = self.k;
        dst.par_chunks_mut(k * w).enumerate().try_for_each_init(
            || vec![0.0f64; k * w],
            |scratch, (br, band)| -> Result<()> {
                for dr in 0..k {
                    self.diffuse_row(src, br * k + dr, coeffs, lambda, &mut scratch[dr * w..(dr + 1) * w]);
                }
                for bc in 0..source.width() {
                    let cols = bc * k..(bc + 1) * k;
                    if !source.is_valid(br, bc) {
                        for dr in 0..k {
                            for c in cols.clone() {
                                band[dr * w + c] = T::of(scratch[dr * w + c]);
                            }
                        }
                        continue;
                    }
                    if k == 1 {
                        band[bc] = T::zero();
                        continue;
                    }
                    let sum: f64 = (0..k)
                        .map(|dr| scratch[dr * w..][cols.clone()].iter().sum::<f64>())
                        .sum();
                    let mean_v = sum / (k * k) as f64;
                    let u = self.low[br * self.low_width + bc].as_f64();
                    let mean = u + mean_v;
                    if !(mean > MIN_BLOCK_MEAN) || !mean.is_finite() {
                        return Err(Error::ZeroBlockMean { row: br, col: bc, mean });
                    }
                    // ratio − 1, without the cancellation of S / mean − 1
                    let g = -mean_v / mean;
                    for dr in 0..k {
                        for c in cols.clone() {
                            let d = scratch[dr * w + c];
                            band[dr * w + c] = T::of(d + g * (u + d));
                        }
                    }
                }
                Ok(())
            },
        )
    }

    fn diffuse_row(&self, src: &[T], r: usize, coeffs: &CoefficientField<T>, lambda: f64, out: &mut [f64]) {
        let (h, w) = coeffs.dims();
        let f = |x: T| x.as_f64();
        let k = self.k;
        let vert = coeffs.vertical();
        let row = &src[r * w..(r + 1) * w];
        let east = &coeffs.horizontal()[r * (w - 1)..(r + 1) * (w - 1)];
        let north = (r > 0).then(|| (&src[(r - 1) * w..r * w], &vert[(r - 1) * w..r * w]));
        let south = (r + 1 < h).then(|| (&src[(r + 1) * w..(r + 2) * w], &vert[r * w..(r + 1) * w]));

        // offset differences
        for c in 0..w {
            let p = f(row[c]);
            let mut acc = 0.0;
            if c > 0 {
                acc += (f(row[c - 1]) - p) * f(east[c - 1]);
            }
            if c + 1 < w {
                acc += (f(row[c + 1]) - p) * f(east[c]);
            }
            if let Some((n, kn)) = north {
                acc += (f(n[c]) - p) * f(kn[c]);
            }
            if let Some((s, ks)) = south {
                acc += (f(s[c]) - p) * f(ks[c]);
            }
            out[c] = acc;
        }

        // jumps of U, which only occur across block boundaries
        let u = self.row(r);
        for bc in 1..self.low_width {
            let jump = f(u[bc]) - f(u[bc - 1]);
            let c = bc * k;
            out[c - 1] += jump * f(east[c - 1]);
            out[c] -= jump * f(east[c - 1]);
        }
        let across = |other: &[T], kv: &[T], out: &mut [f64]| {
            for c in 0..w {
                let bc = c / k;
                out[c] += (f(other[bc]) - f(u[bc])) * f(kv[c]);
            }
        };
        if r % k == 0 && r > 0 {
            across(self.row(r - 1), &vert[(r - 1) * w..r * w], out);
        }
        if r % k == k - 1 && r + 1 < h {
            across(self.row(r + 1), &vert[r * w..(r + 1) * w], out);
        }

        for c in 0..w {
            out[c] = f(row[c]) + lambda * out[c];
        }
    }

    /// Consistency residual of the materialized target.
    pub fn residual(&self, v: &[T], source: &DepthGrid<T>) -> f64 {
        let (k, w) = (self.k, self.width());
        let mut worst = 0.0f64;
        for br in 0..source.height() {
            for bc in 0..source.width() {
                if !source.is_valid(br, bc) {
                    continue;
                }
                let u = self.low[br * self.low_width + bc].as_f64();
                let mut sum = 0.0f64;
                for r in br * k..(br + 1) * k {
                    for c in bc * k..(bc + 1) * k {
                        sum += T::of(u + v[r * w + c].as_f64()).as_f64();
                    }
                }
                let target = source.get(br, bc).as_f64();
                worst = worst.max((sum / (k * k) as f64 - target).abs() / target.abs());
            }
        }
        worst
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adjustment::adjust;
    use crate::diffusion::{diffusion_step, Lambda};
    use crate::grid::ScaleFactor;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn fused_step_matches_the_separate_operators() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for k in [1, 2, 3] {
            let (lh, lw) = (3, 4);
            let (h, w) = (lh * k, lw * k);
            let mut source = DepthGrid::from_fn(lh, lw, |_, _| rng.gen_range(0.5..4.0f64)).unwrap();
            source = source.masked(Some((0..lh * lw).map(|i| i != 5).collect())).unwrap();
            let filled = source.fill_gaps_nearest().unwrap();
            let y = DepthGrid::from_fn(h, w, |_, _| rng.gen_range(0.5..4.0f64)).unwrap();
            let hz: Vec<f64> = (0..h * (w - 1)).map(|_| rng.gen_range(0.01..1.0)).collect();
            let vt: Vec<f64> = (0..(h - 1) * w).map(|_| rng.gen_range(0.01..1.0)).collect();
            let coeffs = CoefficientField::from_planes(h, w, hz, vt).unwrap();

            let expected = adjust(
                &diffusion_step(&y, &coeffs, Lambda::DEFAULT).unwrap(),
                &source,
                ScaleFactor::new(k).unwrap(),
            )
            .unwrap();
            let reference = Reference::new(&filled, k);
            let v = reference.offset_of(y.values());
            let mut next = vec![0.0; v.len()];
            reference
                .step(&v, &mut next, &coeffs, Lambda::DEFAULT.get(), &source)
                .unwrap();
            for (a, b) in reference.materialize(&next).iter().zip(expected.values()) {
                assert!((a - b).abs() <= 1e-12, "k={k}: {a} vs {b}");
            }
        }
    }
}
