//! Separable cubic-convolution upsampling (Keys kernel, `a = -0.5`).

use rayon::prelude::*;

use crate::grid::{DepthGrid, ScaleFactor};
use crate::scalar::Real;

const A: f64 = -0.5;

fn keys(x: f64) -> f64 {
    let x = x.abs();
    if x <= 1.0 {
        ((A + 2.0) * x - (A + 3.0)) * x * x + 1.0
    } else if x < 2.0 {
        ((A * x - 5.0 * A) * x + 8.0 * A) * x - 4.0 * A
    } else {
        0.0
    }
}

/// Four clamped source taps and their weights for every output coordinate.
fn taps<T: Real>(src_len: usize, s: usize) -> Vec<([usize; 4], [T; 4])> {
    (0..src_len * s)
        .map(|j| {
            // half-pixel aligned: output centre j+0.5 maps to source centre x+0.5
            let x = (j as f64 + 0.5) / s as f64 - 0.5;
            let x0 = x.floor();
            let t = x - x0;
            let x0 = x0 as isize;
            let clamp = |i: isize| i.clamp(0, src_len as isize - 1) as usize;
            (
                [clamp(x0 - 1), clamp(x0), clamp(x0 + 1), clamp(x0 + 2)],
                [
                    T::of(keys(t + 1.0)),
                    T::of(keys(t)),
                    T::of(keys(1.0 - t)),
                    T::of(keys(2.0 - t)),
                ],
            )
        })
        .collect()
}

/// Upsamples by `s` with cubic convolution and edge-clamped taps.
///
/// The kernel has no notion of a mask, so gaps are first filled from the
/// nearest valid pixel. A grid without any valid pixel is returned as a
/// replicated copy of its raw values. The output has no mask.
pub fn bicubic_upsample<T: Real>(x: &DepthGrid<T>, s: ScaleFactor) -> DepthGrid<T> {
    let filled = x.fill_gaps_nearest().unwrap_or_else(|_| x.clone());
    let k = s.get();
    let (lh, lw) = filled.dims();
    let (h, w) = (lh * k, lw * k);
    let src = filled.values();

    let col_taps = taps::<T>(lw, k);
    let row_taps = taps::<T>(lh, k);

    // horizontal pass: lh × w
    let mut mid = vec![T::zero(); lh * w];
    mid.par_chunks_mut(w).enumerate().for_each(|(r, out)| {
        let row = &src[r * lw..(r + 1) * lw];
        for (o, (idx, wt)) in out.iter_mut().zip(&col_taps) {
            *o = row[idx[0]] * wt[0] + row[idx[1]] * wt[1] + row[idx[2]] * wt[2] + row[idx[3]] * wt[3];
        }
    });

    // vertical pass: h × w
    let mut out = vec![T::zero(); h * w];
    out.par_chunks_mut(w)
        .zip(row_taps.par_iter())
        .for_each(|(dst, (idx, wt))| {
            let rows = idx.map(|i| &mid[i * w..(i + 1) * w]);
            for (c, d) in dst.iter_mut().enumerate() {
                *d = rows[0][c] * wt[0] + rows[1][c] * wt[1] + rows[2][c] * wt[2] + rows[3][c] * wt[3];
            }
        });

    DepthGrid::from_parts(h, w, out, None)
}
