//! Reference fixed point of the diffusion–adjustment map.
//!
//! A deliberately plain, sequential `f64` implementation that shares no
//! kernels with the production path: diffusion is accumulated edge by edge
//! into a flux buffer instead of pixel by pixel, and block means are summed
//! directly. It exists to check [`solve`](super::solve) on small grids.

use crate::coefficients::CoefficientField;
use crate::diffusion::Lambda;
use crate::error::{Error, Result};
use crate::grid::{DepthGrid, ScaleFactor};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OracleOptions {
    /// Stop once `max |Y_t − Y_{t−1}|` falls below `tolerance · max(1, mean S)`.
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for OracleOptions {
    fn default() -> Self {
        OracleOptions {
            tolerance: 1e-13,
            max_iterations: 1_000_000,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OracleSolution {
    pub depth: DepthGrid<f64>,
    pub iterations: usize,
    pub last_update: f64,
}

/// Iterates from the nearest-neighbour upsampling of `source` until the
/// update stalls below 1e-13 (relative to the source level when it exceeds 1).
pub fn equilibrium_oracle(
    source: &DepthGrid<f64>,
    coeffs: &CoefficientField<f64>,
    s: ScaleFactor,
    lambda: Lambda,
) -> Result<OracleSolution> {
    equilibrium_oracle_with(source, coeffs, s, lambda, None, OracleOptions::default())
}

pub fn equilibrium_oracle_with(
    source: &DepthGrid<f64>,
    coeffs: &CoefficientField<f64>,
    s: ScaleFactor,
    lambda: Lambda,
    init: Option<&DepthGrid<f64>>,
    options: OracleOptions,
) -> Result<OracleSolution> {
    let k = s.get();
    let (lh, lw) = source.dims();
    let (h, w) = (lh * k, lw * k);
    if coeffs.dims() != (h, w) {
        return Err(Error::DimensionMismatch(format!(
            "coefficients are {}x{}, expected {h}x{w}",
            coeffs.height(),
            coeffs.width()
        )));
    }
    let valid: Vec<f64> = source.valid_values().collect();
    if valid.is_empty() {
        return Err(Error::EmptySource);
    }
    if let Some(&bad) = valid.iter().find(|&&v| !(v > 0.0)) {
        return Err(Error::NonPositiveSource {
            row: 0,
            col: 0,
            value: bad,
        });
    }
    let source_mean = valid.iter().sum::<f64>() / valid.len() as f64;
    let threshold = options.tolerance * source_mean.abs().max(1.0);

    let mut y = match init {
        Some(g) => {
            if g.dims() != (h, w) {
                return Err(Error::DimensionMismatch("oracle initialization has wrong size".into()));
            }
            g.values().to_vec()
        }
        None => {
            let mut y = vec![0.0; h * w];
            for r in 0..h {
                for c in 0..w {
                    let (br, bc) = (r / k, c / k);
                    y[r * w + c] = if source.is_valid(br, bc) {
                        source.get(br, bc)
                    } else {
                        source_mean
                    };
                }
            }
            y
        }
    };

    let lam = lambda.get();
    let mut flux = vec![0.0; h * w];
    let mut last_update = f64::INFINITY;
    for iteration in 1..=options.max_iterations {
        flux.iter_mut().for_each(|f| *f = 0.0);
        for r in 0..h {
            for c in 0..w {
                let p = r * w + c;
                if c + 1 < w {
                    let q = p + 1;
                    let f = coeffs.east(r, c) * (y[q] - y[p]);
                    flux[p] += f;
                    flux[q] -= f;
                }
                if r + 1 < h {
                    let q = p + w;
                    let f = coeffs.south(r, c) * (y[q] - y[p]);
                    flux[p] += f;
                    flux[q] -= f;
                }
            }
        }
        let mut next: Vec<f64> = y.iter().zip(&flux).map(|(v, f)| v + lam * f).collect();

        for br in 0..lh {
            for bc in 0..lw {
                if !source.is_valid(br, bc) {
                    continue;
                }
                let mut sum = 0.0;
                for r in br * k..(br + 1) * k {
                    for c in bc * k..(bc + 1) * k {
                        sum += next[r * w + c];
                    }
                }
                let mean = sum / (k * k) as f64;
                if !(mean > 1e-12) {
                    return Err(Error::ZeroBlockMean { row: br, col: bc, mean });
                }
                let ratio = source.get(br, bc) / mean;
                for r in br * k..(br + 1) * k {
                    for c in bc * k..(bc + 1) * k {
                        next[r * w + c] *= ratio;
                    }
                }
            }
        }

        last_update = y.iter().zip(&next).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        y = next;
        if last_update < threshold {
            return Ok(OracleSolution {
                depth: DepthGrid::new(h, w, y)?,
                iterations: iteration,
                last_update,
            });
        }
    }
    Err(Error::NoConvergence {
        iterations: options.max_iterations,
        last_update,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adjustment::{block_downsample, consistency_residual};
    use crate::diffusion::dirichlet_energy;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn constant_consistent_input_is_immediate_fixed_point() {
        let v = 2.75;
        let s = ScaleFactor::new(2).unwrap();
        let source = block_downsample(&DepthGrid::filled(8, 8, v).unwrap(), s).unwrap();
        let coeffs = CoefficientField::uniform(8, 8, 0.6).unwrap();
        let sol = equilibrium_oracle(&source, &coeffs, s, Lambda::DEFAULT).unwrap();
        assert_eq!(sol.iterations, 1);
        assert!(sol.depth.values().iter().all(|&y| y == v));
    }

    #[test]
    fn reports_non_convergence() {
        let s = ScaleFactor::new(2).unwrap();
        let source = DepthGrid::new(1, 2, vec![1.0, 3.0]).unwrap();
        let coeffs = CoefficientField::uniform(2, 4, 1.0).unwrap();
        let opts = OracleOptions {
            max_iterations: 3,
            ..Default::default()
        };
        let err = equilibrium_oracle_with(&source, &coeffs, s, Lambda::DEFAULT, None, opts).unwrap_err();
        assert!(matches!(err, Error::NoConvergence { iterations: 3, .. }));
    }

    /// Graph Laplacian `(L y)_p = Σ_n c (y_p − y_n)` on an `8 × 8` grid.
    fn laplacian(y: &[f64], coeffs: &CoefficientField<f64>) -> Vec<f64> {
        let mut out = vec![0.0; 64];
        for r in 0..8 {
            for c in 0..8 {
                let p = r * 8 + c;
                if c + 1 < 8 {
                    let f = coeffs.east(r, c) * (y[p] - y[p + 1]);
                    out[p] += f;
                    out[p + 1] -= f;
                }
                if r + 1 < 8 {
                    let f = coeffs.south(r, c) * (y[p] - y[p + 8]);
                    out[p] += f;
                    out[p + 8] -= f;
                }
            }
        }
        out
    }

    fn block_indices(br: usize, bc: usize) -> [usize; 4] {
        [0, 1, 2, 3].map(|i| (br * 2 + i / 2) * 8 + bc * 2 + i % 2)
    }

    /// At a fixed point the multiplicative adjustment forces `L y = μ_b y`
    /// inside every block: the Dirichlet energy is stationary on the set of
    /// grids with the same block means and the same per-block sum of squares,
    /// not on all grids with the same block means. Perturbations tangent to
    /// that set must not lower the energy.
    #[test]
    fn uniform_guide_fixed_point_is_energy_critical() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let s = ScaleFactor::new(2).unwrap();
        let source = DepthGrid::from_fn(4, 4, |_, _| rng.gen_range(0.5..2.0)).unwrap();
        let coeffs = CoefficientField::uniform(8, 8, 1.0).unwrap();
        let sol = equilibrium_oracle(&source, &coeffs, s, Lambda::DEFAULT).unwrap();
        let y = sol.depth.values();
        assert!(consistency_residual(&sol.depth, &source, s).unwrap() <= 1e-12);

        let ly = laplacian(y, &coeffs);
        for br in 0..4 {
            for bc in 0..4 {
                let idx = block_indices(br, bc);
                let mu = ly[idx[0]] / y[idx[0]];
                for &i in &idx {
                    assert!((ly[i] - mu * y[i]).abs() < 1e-9, "block ({br},{bc})");
                }
            }
        }

        let base = dirichlet_energy(&sol.depth, &coeffs).unwrap();
        for _ in 0..50 {
            let mut noise: Vec<f64> = (0..64).map(|_| rng.gen_range(-1e-3..1e-3)).collect();
            for br in 0..4 {
                for bc in 0..4 {
                    // Gram-Schmidt against the block's constant vector and y
                    let idx = block_indices(br, bc);
                    let ones = [1.0; 4];
                    let yb = idx.map(|i| y[i]);
                    let ym = yb.iter().sum::<f64>() / 4.0;
                    let yc = yb.map(|v| v - ym);
                    let mut nb = idx.map(|i| noise[i]);
                    let m = nb.iter().sum::<f64>() / 4.0;
                    nb.iter_mut().zip(ones).for_each(|(n, o)| *n -= m * o);
                    let yy: f64 = yc.iter().map(|v| v * v).sum();
                    if yy > 0.0 {
                        let proj = nb.iter().zip(&yc).map(|(a, b)| a * b).sum::<f64>() / yy;
                        nb.iter_mut().zip(yc).for_each(|(n, v)| *n -= proj * v);
                    }
                    for (k, &i) in idx.iter().enumerate() {
                        noise[i] = nb[k];
                    }
                }
            }
            let perturbed = DepthGrid::new(8, 8, y.iter().zip(&noise).map(|(a, b)| a + b).collect()).unwrap();
            assert!(consistency_residual(&perturbed, &source, s).unwrap() <= 1e-12);
            assert!(dirichlet_energy(&perturbed, &coeffs).unwrap() >= base - 1e-12);
        }
    }

    #[test]
    fn initialization_does_not_change_the_equilibrium() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let s = ScaleFactor::new(2).unwrap();
        let source = DepthGrid::from_fn(4, 4, |_, _| rng.gen_range(0.5..2.0)).unwrap();
        let h: Vec<f64> = (0..8 * 7).map(|_| rng.gen_range(0.05..1.0)).collect();
        let v: Vec<f64> = (0..7 * 8).map(|_| rng.gen_range(0.05..1.0)).collect();
        let coeffs = CoefficientField::from_planes(8, 8, h, v).unwrap();
        let nearest = equilibrium_oracle(&source, &coeffs, s, Lambda::DEFAULT).unwrap();
        let mean = source.valid_mean().unwrap();
        let flat = DepthGrid::filled(8, 8, mean).unwrap();
        let constant = equilibrium_oracle_with(
            &source,
            &coeffs,
            s,
            Lambda::DEFAULT,
            Some(&flat),
            OracleOptions::default(),
        )
        .unwrap();
        for (a, b) in nearest.depth.values().iter().zip(constant.depth.values()) {
            assert!((a - b).abs() <= 1e-9, "{a} vs {b}");
        }
    }
}
