//! The diffusion–adjustment loop.
//!
//! Coefficients are computed once from the (normalized, optionally
//! source-augmented) guide. Each iteration then runs one diffusion step into
//! a second buffer and rescales that buffer in place so that its block means
//! match the source. Two target-sized buffers are reused for the whole run,
//! so memory does not grow with the iteration count. The buffers hold the
//! target minus the upsampled source (see [`offset`]).

mod offset;
mod oracle;

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use log::info;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use oracle::{equilibrium_oracle, equilibrium_oracle_with, OracleOptions, OracleSolution};

use crate::adjustment::{consistency_residual, nearest_upsample};
use crate::bench::bicubic_upsample;
use crate::coefficients::{append_source_channel, compute_coefficients, DEFAULT_KAPPA};
use crate::diffusion::Lambda;
use crate::error::{Error, Result};
use crate::grid::{normalize_guide, validate_pair, DepthGrid, GuideStack, ScaleFactor};
use crate::scalar::Real;

/// Iteration count used when none is given.
pub const DEFAULT_ITERATIONS: usize = 8000;

/// How the target is seeded before the first iteration.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitMode {
    /// Every pixel set to the mean of the valid source values.
    Constant,
    /// Block replication of the source.
    Nearest,
    /// Cubic convolution of the source, clamped to the source value range.
    #[default]
    Bicubic,
}

impl FromStr for InitMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "constant" => Ok(InitMode::Constant),
            "nearest" => Ok(InitMode::Nearest),
            "bicubic" => Ok(InitMode::Bicubic),
            other => Err(Error::InvalidConfig(format!("unknown init mode {other:?}"))),
        }
    }
}

impl fmt::Display for InitMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            InitMode::Constant => "constant",
            InitMode::Nearest => "nearest",
            InitMode::Bicubic => "bicubic",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolverConfig {
    pub lambda: Lambda,
    pub kappa: f64,
    pub iterations: usize,
    pub init: InitMode,
    /// Stop once the max-abs update of an iteration drops below this; 0 disables.
    pub residual_tol: f64,
    pub append_source_channel: bool,
    /// Record and log progress every this many iterations; 0 disables.
    pub log_every: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            lambda: Lambda::DEFAULT,
            kappa: DEFAULT_KAPPA,
            iterations: DEFAULT_ITERATIONS,
            init: InitMode::default(),
            residual_tol: 0.0,
            append_source_channel: false,
            log_every: 0,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        Lambda::new(self.lambda.get())?;
        if !(self.kappa > 0.0 && self.kappa.is_finite()) {
            return Err(Error::InvalidKappa(self.kappa));
        }
        if self.iterations == 0 {
            return Err(Error::InvalidConfig("iteration count must be at least 1".into()));
        }
        if !(self.residual_tol >= 0.0 && self.residual_tol.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "residual tolerance must be finite and non-negative, got {}",
                self.residual_tol
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResidualSample {
    pub iteration: usize,
    /// `max |Y_t − Y_{t−1}|`.
    pub max_update: f64,
    pub consistency: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SolveDiagnostics {
    pub iterations_run: usize,
    pub residual_trace: Vec<ResidualSample>,
    pub final_consistency: f64,
    /// Seconds, including coefficient computation and initialization.
    pub wall_time: f64,
}

/// Seeds the target from the source.
pub fn initialize<T: Real>(source: &DepthGrid<T>, s: ScaleFactor, mode: InitMode) -> Result<DepthGrid<T>> {
    let (h, w) = (source.height() * s.get(), source.width() * s.get());
    match mode {
        InitMode::Constant => {
            let mean = source.valid_mean().ok_or(Error::EmptySource)?;
            DepthGrid::filled(h, w, T::of(mean))
        }
        InitMode::Nearest => Ok(nearest_upsample(&source.fill_gaps_nearest()?, s)),
        InitMode::Bicubic => {
            let filled = source.fill_gaps_nearest()?;
            let (lo, hi) = filled
                .values()
                .iter()
                .fold((T::infinity(), T::neg_infinity()), |(lo, hi), &v| {
                    (lo.min(v), hi.max(v))
                });
            // cubic overshoot could leave the positive range the adjustment needs
            bicubic_upsample(&filled, s).map(|v| v.max(lo).min(hi))
        }
    }
}

fn max_abs_diff<T: Real>(a: &[T], b: &[T]) -> f64 {
    a.par_iter()
        .zip(b.par_iter())
        .map(|(&x, &y)| (x - y).abs().as_f64())
        .reduce(|| 0.0, f64::max)
}

/// Runs the full diffusion–adjustment loop and returns `Y_N`.
///
/// Every iterate, and therefore the result, has block means equal to the
/// source up to rounding. Parallel sections use the current rayon pool; the
/// output is bitwise identical for any pool size.
pub fn solve<T: Real>(
    source: &DepthGrid<T>,
    guide: &GuideStack<T>,
    s: ScaleFactor,
    config: &SolverConfig,
) -> Result<(DepthGrid<T>, SolveDiagnostics)> {
    let start = Instant::now();
    config.validate()?;
    validate_pair(source, guide, s)?;
    if source.valid_count() == 0 {
        return Err(Error::EmptySource);
    }

    let guide = if config.append_source_channel {
        append_source_channel(guide, source, s)?
    } else {
        normalize_guide(guide)
    };
    let coeffs = compute_coefficients(&guide, config.kappa)?;
    drop(guide);

    let filled = source.fill_gaps_nearest()?;
    let reference = offset::Reference::new(&filled, s.get());
    let init = initialize(source, s, config.init)?;
    let (h, w) = init.dims();
    let mut current = reference.offset_of(init.values());
    drop(init);
    let mut next = vec![T::zero(); current.len()];
    let lambda = config.lambda.get();

    let mut trace = Vec::new();
    let mut iterations_run = 0;
    for t in 1..=config.iterations {
        reference.step(&current, &mut next, &coeffs, lambda, source)?;

        let logging = config.log_every > 0 && t % config.log_every == 0;
        let update = (config.residual_tol > 0.0 || logging).then(|| max_abs_diff(&current, &next));
        std::mem::swap(&mut current, &mut next);
        iterations_run = t;

        if logging {
            let consistency = reference.residual(&current, source);
            let max_update = update.unwrap_or(f64::NAN);
            info!("iteration {t}: max update {max_update:.3e}, consistency {consistency:.3e}");
            trace.push(ResidualSample {
                iteration: t,
                max_update,
                consistency,
            });
        }
        if let Some(u) = update {
            if config.residual_tol > 0.0 && u < config.residual_tol {
                break;
            }
        }
    }
    drop(next);
    let current = reference.materialize(&current);

    let out = DepthGrid::from_parts(h, w, current, None);
    let final_consistency = consistency_residual(&out, source, s)?;
    let diagnostics = SolveDiagnostics {
        iterations_run,
        residual_trace: trace,
        final_consistency,
        wall_time: start.elapsed().as_secs_f64(),
    };
    Ok((out, diagnostics))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adjustment::block_downsample;
    use crate::grid::SampleEncoding;
    use approx::assert_relative_eq;

    fn sf(s: usize) -> ScaleFactor {
        ScaleFactor::new(s).unwrap()
    }

    fn flat_guide(h: usize, w: usize) -> GuideStack<f64> {
        GuideStack::new(h, w, 3, vec![0.5; h * w * 3], SampleEncoding::Float).unwrap()
    }

    #[test]
    fn config_validation() {
        assert!(SolverConfig::default().validate().is_ok());
        let bad = [
            SolverConfig {
                iterations: 0,
                ..Default::default()
            },
            SolverConfig {
                kappa: 0.0,
                ..Default::default()
            },
            SolverConfig {
                residual_tol: -1.0,
                ..Default::default()
            },
            SolverConfig {
                lambda: Lambda::new_unchecked(0.3),
                ..Default::default()
            },
        ];
        for cfg in bad {
            assert!(cfg.validate().is_err(), "{cfg:?}");
        }
        assert_eq!("nearest".parse::<InitMode>().unwrap(), InitMode::Nearest);
        assert!("cubic".parse::<InitMode>().is_err());
    }

    #[test]
    fn constant_init_uses_valid_mean() {
        let src = DepthGrid::with_mask(1, 3, vec![4.0f64, 4.4, 99.0], vec![true, true, false]).unwrap();
        let y0 = initialize(&src, sf(2), InitMode::Constant).unwrap();
        assert_eq!(y0.dims(), (2, 6));
        assert!(y0.values().iter().all(|&v| (v - 4.2).abs() < 1e-12));
        let none = DepthGrid::with_mask(1, 1, vec![1.0f64], vec![false]).unwrap();
        assert!(matches!(
            initialize(&none, sf(2), InitMode::Constant),
            Err(Error::EmptySource)
        ));
    }

    #[test]
    fn nearest_init_scale_one_is_source() {
        let src = DepthGrid::from_fn(3, 3, |r, c| 1.0 + (r * 3 + c) as f32).unwrap();
        assert_eq!(initialize(&src, sf(1), InitMode::Nearest).unwrap(), src);
    }

    #[test]
    fn bicubic_init_stays_in_source_range() {
        let src = DepthGrid::from_fn(4, 4, |_, c| if c < 2 { 1.0f64 } else { 100.0 }).unwrap();
        let y0 = initialize(&src, sf(4), InitMode::Bicubic).unwrap();
        assert!(y0.values().iter().all(|&v| (1.0..=100.0).contains(&v)));
    }

    #[test]
    fn constant_init_catches_up_after_one_iteration() {
        let src = DepthGrid::from_fn(3, 4, |r, c| 1.0 + ((r * 7 + c * 3) % 5) as f64).unwrap();
        let guide = GuideStack::from_fn(6, 8, |r, c| ((r * 13 + c * 5) % 7) as f64 / 7.0).unwrap();
        let one = |init| {
            let cfg = SolverConfig {
                iterations: 1,
                init,
                ..Default::default()
            };
            solve(&src, &guide, sf(2), &cfg).unwrap().0
        };
        let from_const = one(InitMode::Constant);
        let up = nearest_upsample(&src, sf(2));
        for (a, b) in from_const.values().iter().zip(up.values()) {
            assert_relative_eq!(*a, *b, max_relative = 1e-14);
        }
        // ...which is exactly where nearest initialization starts
        let zero = initialize(&src, sf(2), InitMode::Nearest).unwrap();
        assert_eq!(zero, up);
    }

    #[test]
    fn scale_one_returns_source() {
        let src = DepthGrid::from_fn(4, 5, |r, c| 0.5 + (r + 2 * c) as f64).unwrap();
        let guide = GuideStack::from_fn(4, 5, |r, c| ((r * c) % 3) as f64 * 0.2).unwrap();
        for n in [1, 7] {
            let cfg = SolverConfig {
                iterations: n,
                ..Default::default()
            };
            let (out, diag) = solve(&src, &guide, sf(1), &cfg).unwrap();
            assert_eq!(out.values(), src.values());
            assert_eq!(diag.final_consistency, 0.0);
        }
    }

    #[test]
    fn every_iterate_is_consistent_and_trace_is_logged() {
        let src = DepthGrid::from_fn(4, 4, |r, c| 1.0 + ((r * 5 + c * 3) % 4) as f32).unwrap();
        let guide = GuideStack::from_fn(16, 16, |r, c| ((r / 3 + c / 5) % 2) as f32).unwrap();
        let cfg = SolverConfig {
            iterations: 50,
            log_every: 10,
            ..Default::default()
        };
        let (out, diag) = solve(&src, &guide, sf(4), &cfg).unwrap();
        assert_eq!(diag.iterations_run, 50);
        assert_eq!(diag.residual_trace.len(), 5);
        for sample in &diag.residual_trace {
            assert!(sample.consistency <= 1e-5);
            assert!(sample.max_update.is_finite());
        }
        assert!(consistency_residual(&out, &src, sf(4)).unwrap() <= 1e-5);
    }

    #[test]
    fn early_stop() {
        let src = DepthGrid::filled(2, 2, 3.0f64).unwrap();
        let cfg = SolverConfig {
            residual_tol: 1e-9,
            init: InitMode::Nearest,
            ..Default::default()
        };
        let (out, diag) = solve(&src, &flat_guide(4, 4), sf(2), &cfg).unwrap();
        assert_eq!(diag.iterations_run, 1);
        assert!(out.values().iter().all(|&v| v == 3.0));
    }

    #[test]
    fn rejects_invalid_inputs() {
        let src = DepthGrid::filled(2, 2, 3.0f64).unwrap();
        assert!(matches!(
            solve(&src, &flat_guide(5, 4), sf(2), &SolverConfig::default()),
            Err(Error::DimensionMismatch(_))
        ));
        let neg = DepthGrid::new(1, 2, vec![1.0f64, -1.0]).unwrap();
        assert!(matches!(
            solve(&neg, &flat_guide(2, 4), sf(2), &SolverConfig::default()),
            Err(Error::NonPositiveSource { .. })
        ));
    }

    /// Step edge in the guide inside a source block: the jump of the output
    /// lands on the guide edge, not on the block boundary.
    #[test]
    fn guide_edge_inside_block_is_transferred() {
        let (h, w, s) = (4, 64, sf(4));
        let gt = DepthGrid::from_fn(h, w, |_, c| if c < 30 { 1.0f64 } else { 2.0 }).unwrap();
        let src = block_downsample(&gt, s).unwrap();
        let guide = GuideStack::from_fn(h, w, |_, c| if c < 30 { 0.2 } else { 0.5 }).unwrap();
        let cfg = SolverConfig {
            iterations: 20_000,
            init: InitMode::Nearest,
            ..Default::default()
        };
        let (out, _) = solve(&src, &guide, s, &cfg).unwrap();
        let row: Vec<f64> = (0..w).map(|c| out.get(1, c)).collect();
        let (jump_at, _) = row
            .windows(2)
            .enumerate()
            .map(|(i, p)| (i, (p[1] - p[0]).abs()))
            .fold((0, 0.0), |best, x| if x.1 > best.1 { x } else { best });
        assert_eq!(jump_at, 29);
        assert!((row[29] - 1.0).abs() < 0.05, "{row:?}");
        assert!((row[30] - 2.0).abs() < 0.05, "{row:?}");
    }
}
