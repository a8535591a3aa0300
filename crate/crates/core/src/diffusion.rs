//! Explicit guided diffusion step with zero-flux boundaries.

use rayon::prelude::*;

use crate::coefficients::CoefficientField;
use crate::error::{Error, Result};
use crate::grid::DepthGrid;
use crate::scalar::Real;

/// Step size of the explicit update, restricted to the open interval
/// `(0, 1/4)` where the 4-neighbour scheme is a convex combination.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Lambda(f64);

impl Lambda {
    pub const DEFAULT: Lambda = Lambda(0.24);

    pub fn new(value: f64) -> Result<Self> {
        if value > 0.0 && value < 0.25 {
            Ok(Lambda(value))
        } else {
            Err(Error::InvalidLambda(value))
        }
    }

    /// Skips the stability check. Only meant for demonstrating what happens
    /// outside the stable range; the solver never accepts such a value.
    pub fn new_unchecked(value: f64) -> Self {
        Lambda(value)
    }

    #[inline]
    pub fn get(self) -> f64 {
        self.0
    }
}

impl Default for Lambda {
    fn default() -> Self {
        Self::DEFAULT
    }
}

fn check_dims<T: Real>(y: &DepthGrid<T>, coeffs: &CoefficientField<T>) -> Result<()> {
    if y.dims() != coeffs.dims() {
        return Err(Error::dims(format!(
            "depth grid is {}x{} but coefficients are {}x{}",
            y.height(),
            y.width(),
            coeffs.height(),
            coeffs.width()
        )));
    }
    Ok(())
}

/// `ŷ_p = y_p + λ Σ_n c(p,n) (y_n − y_p)` over the existing 4-neighbours.
///
/// Masked pixels keep their value and exchange no flux with their neighbours.
pub fn diffusion_step<T: Real>(y: &DepthGrid<T>, coeffs: &CoefficientField<T>, lambda: Lambda) -> Result<DepthGrid<T>> {
    check_dims(y, coeffs)?;
    let mut out = vec![T::zero(); y.len()];
    diffuse_into(y.values(), &mut out, y.mask(), coeffs, T::of(lambda.get()));
    Ok(DepthGrid::from_parts(
        y.height(),
        y.width(),
        out,
        y.mask().map(<[bool]>::to_vec),
    ))
}

/// Jacobi update from `src` into `dst`, parallel over rows. Every output
/// pixel is summed in the fixed order W, E, N, S, so the result does not
/// depend on the number of worker threads.
pub(crate) fn diffuse_into<T: Real>(
    src: &[T],
    dst: &mut [T],
    mask: Option<&[bool]>,
    coeffs: &CoefficientField<T>,
    lambda: T,
) {
    let (h, w) = coeffs.dims();
    debug_assert_eq!(src.len(), h * w);
    debug_assert_eq!(dst.len(), h * w);
    let horiz = coeffs.horizontal();
    let vert = coeffs.vertical();

    dst.par_chunks_mut(w).enumerate().for_each(|(r, out)| {
        let row = &src[r * w..(r + 1) * w];
        let north = (r > 0).then(|| (&src[(r - 1) * w..r * w], &vert[(r - 1) * w..r * w]));
        let south = (r + 1 < h).then(|| (&src[(r + 1) * w..(r + 2) * w], &vert[r * w..(r + 1) * w]));
        let east = &horiz[r * (w - 1)..(r + 1) * (w - 1)];

        match mask {
            None => {
                for c in 0..w {
                    let p = row[c];
                    let mut acc = T::zero();
                    if c > 0 {
                        acc += (row[c - 1] - p) * east[c - 1];
                    }
                    if c + 1 < w {
                        acc += (row[c + 1] - p) * east[c];
                    }
                    if let Some((n, k)) = north {
                        acc += (n[c] - p) * k[c];
                    }
                    if let Some((s, k)) = south {
                        acc += (s[c] - p) * k[c];
                    }
                    out[c] = p + lambda * acc;
                }
            }
            Some(mask) => {
                let m = &mask[r * w..(r + 1) * w];
                let mn = (r > 0).then(|| &mask[(r - 1) * w..r * w]);
                let ms = (r + 1 < h).then(|| &mask[(r + 1) * w..(r + 2) * w]);
                for c in 0..w {
                    let p = row[c];
                    if !m[c] {
                        out[c] = p;
                        continue;
                    }
                    let mut acc = T::zero();
                    if c > 0 && m[c - 1] {
                        acc += (row[c - 1] - p) * east[c - 1];
                    }
                    if c + 1 < w && m[c + 1] {
                        acc += (row[c + 1] - p) * east[c];
                    }
                    if let (Some((n, k)), Some(mn)) = (north, mn) {
                        if mn[c] {
                            acc += (n[c] - p) * k[c];
                        }
                    }
                    if let (Some((s, k)), Some(ms)) = (south, ms) {
                        if ms[c] {
                            acc += (s[c] - p) * k[c];
                        }
                    }
                    out[c] = p + lambda * acc;
                }
            }
        }
    });
}

/// `½ Σ c(p,n) (y_p − y_n)²` over edges whose endpoints are both valid,
/// each undirected edge counted once. Accumulated in `f64`.
pub fn dirichlet_energy<T: Real>(y: &DepthGrid<T>, coeffs: &CoefficientField<T>) -> Result<f64> {
    check_dims(y, coeffs)?;
    let (h, w) = y.dims();
    let mut energy = 0.0f64;
    for r in 0..h {
        for c in 0..w {
            if !y.is_valid(r, c) {
                continue;
            }
            let p = y.get(r, c).as_f64();
            if c + 1 < w && y.is_valid(r, c + 1) {
                let d = p - y.get(r, c + 1).as_f64();
                energy += coeffs.east(r, c).as_f64() * d * d;
            }
            if r + 1 < h && y.is_valid(r + 1, c) {
                let d = p - y.get(r + 1, c).as_f64();
                energy += coeffs.south(r, c).as_f64() * d * d;
            }
        }
    }
    Ok(0.5 * energy)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::compute_coefficients;
    use crate::grid::GuideStack;
    use approx::assert_relative_eq;

    fn lam(v: f64) -> Lambda {
        Lambda::new(v).unwrap()
    }

    #[test]
    fn lambda_bounds() {
        assert!(Lambda::new(0.24).is_ok());
        assert!(Lambda::new(0.25).is_err());
        assert!(Lambda::new(0.0).is_err());
        assert!(Lambda::new(-0.1).is_err());
        assert!(Lambda::new(f64::NAN).is_err());
        assert_eq!(Lambda::default().get(), 0.24);
    }

    #[test]
    fn constant_grid_is_fixed() {
        let y = DepthGrid::filled(5, 7, 3.25f32).unwrap();
        let c = CoefficientField::from_planes(5, 7, vec![0.3; 30], vec![0.9; 28]).unwrap();
        let out = diffusion_step(&y, &c, lam(0.24)).unwrap();
        assert_eq!(out, y);
    }

    #[test]
    fn interior_pixel_hand_value() {
        let y = DepthGrid::from_fn(3, 3, |r, c| if (r, c) == (1, 1) { 0.0 } else { 1.0 }).unwrap();
        let c = CoefficientField::uniform(3, 3, 1.0f64).unwrap();
        let out = diffusion_step(&y, &c, lam(0.2)).unwrap();
        assert_relative_eq!(out.get(1, 1), 0.8, epsilon = 1e-15);
    }

    #[test]
    fn corner_pixel_zero_flux() {
        let y = DepthGrid::from_fn(3, 3, |r, c| if (r, c) == (0, 0) { 0.0 } else { 1.0 }).unwrap();
        let c = CoefficientField::uniform(3, 3, 1.0f64).unwrap();
        let out = diffusion_step(&y, &c, lam(0.24)).unwrap();
        assert_relative_eq!(out.get(0, 0), 0.48, epsilon = 1e-15);
    }

    #[test]
    fn dimension_mismatch() {
        let y = DepthGrid::filled(3, 3, 1.0f32).unwrap();
        let c = CoefficientField::uniform(3, 4, 1.0f32).unwrap();
        assert!(matches!(
            diffusion_step(&y, &c, lam(0.1)),
            Err(Error::DimensionMismatch(_))
        ));
        assert!(dirichlet_energy(&y, &c).is_err());
    }

    #[test]
    fn energy_examples() {
        let c = CoefficientField::uniform(1, 2, 1.0f64).unwrap();
        let y = DepthGrid::new(1, 2, vec![0.0, 1.0]).unwrap();
        assert_eq!(dirichlet_energy(&y, &c).unwrap(), 0.5);
        let y3 = y.map(|v| 3.0 * v).unwrap();
        assert_relative_eq!(dirichlet_energy(&y3, &c).unwrap(), 4.5);
        let flat = DepthGrid::filled(1, 2, 2.0f64).unwrap();
        assert_eq!(dirichlet_energy(&flat, &c).unwrap(), 0.0);
    }

    #[test]
    fn masked_pixels_are_frozen_and_isolated() {
        let mut mask = vec![true; 9];
        mask[4] = false;
        let values: Vec<f64> = (0..9).map(|i| i as f64).collect();
        let y = DepthGrid::with_mask(3, 3, values.clone(), mask.clone()).unwrap();
        let c = CoefficientField::uniform(3, 3, 1.0).unwrap();
        let out = diffusion_step(&y, &c, lam(0.2)).unwrap();
        assert_eq!(out.get(1, 1), 4.0);

        let mut perturbed = values;
        perturbed[4] = 1.0e6;
        let y2 = DepthGrid::with_mask(3, 3, perturbed, mask).unwrap();
        let out2 = diffusion_step(&y2, &c, lam(0.2)).unwrap();
        for i in (0..9).filter(|&i| i != 4) {
            assert_eq!(out.values()[i].to_bits(), out2.values()[i].to_bits());
        }
    }

    /// With the guide equal to the current depth, one step is classic
    /// Perona-Malik diffusion with the rational conductance.
    #[test]
    fn self_guided_matches_direct_perona_malik() {
        let vals: Vec<f64> = (0..25).map(|i| ((i * 7919) % 23) as f64 / 23.0).collect();
        let y = DepthGrid::new(5, 5, vals.clone()).unwrap();
        let guide = GuideStack::from_fn(5, 5, |r, c| vals[r * 5 + c]).unwrap();
        let kappa = 0.2;
        let coeffs = compute_coefficients(&guide, kappa).unwrap();
        let out = diffusion_step(&y, &coeffs, lam(0.2)).unwrap();

        let g = |d: f64| 1.0 / (1.0 + (d / kappa).powi(2));
        for r in 0..5i32 {
            for c in 0..5i32 {
                let p = vals[(r * 5 + c) as usize];
                let mut flux = 0.0;
                for (dr, dc) in [(0, -1), (0, 1), (-1, 0), (1, 0)] {
                    let (nr, nc) = (r + dr, c + dc);
                    if (0..5).contains(&nr) && (0..5).contains(&nc) {
                        let d = vals[(nr * 5 + nc) as usize] - p;
                        flux += g(d) * d;
                    }
                }
                assert_relative_eq!(out.get(r as usize, c as usize), p + 0.2 * flux, epsilon = 1e-14);
            }
        }
    }
}
