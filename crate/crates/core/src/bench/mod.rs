//! Benchmark protocol: build a low-resolution source from ground truth,
//! super-resolve it, and score the result against the bicubic baseline.

mod bicubic;
mod metrics;

use std::time::Instant;

use serde::{Deserialize, Serialize};

pub use bicubic::bicubic_upsample;
pub use metrics::{compute_metrics, EvalReport};

use crate::adjustment::{block_downsample, consistency_residual};
use crate::error::Result;
use crate::grid::{DepthGrid, GuideStack, ScaleFactor};
use crate::scalar::Real;
use crate::solver::{solve, SolverConfig};

/// Benchmark source for `gt`: the block mean used by the adjustment step,
/// with blocks lacking any valid pixel marked invalid.
pub fn make_lowres<T: Real>(gt: &DepthGrid<T>, s: ScaleFactor) -> Result<DepthGrid<T>> {
    block_downsample(gt, s)
}

/// Reports for the diffusion solver and the bicubic baseline on one image.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReports {
    pub dada: EvalReport,
    pub bicubic: EvalReport,
}

pub fn run_benchmark<T: Real>(
    gt: &DepthGrid<T>,
    guide: &GuideStack<T>,
    s: ScaleFactor,
    config: &SolverConfig,
) -> Result<BenchmarkReports> {
    let source = make_lowres(gt, s)?;

    let (pred, diag) = solve(&source, guide, s, config)?;
    let mut dada = compute_metrics(&pred, gt)?;
    dada.consistency = diag.final_consistency;
    dada.wall_time = diag.wall_time;

    let start = Instant::now();
    let base = bicubic_upsample(&source, s);
    let wall_time = start.elapsed().as_secs_f64();
    let mut bicubic = compute_metrics(&base, gt)?;
    bicubic.consistency = consistency_residual(&base, &source, s)?;
    bicubic.wall_time = wall_time;

    Ok(BenchmarkReports { dada, bicubic })
}

/// Per-field mean over several reports; `valid_pixel_count` is summed.
pub fn aggregate(reports: &[EvalReport]) -> Option<EvalReport> {
    if reports.is_empty() {
        return None;
    }
    let n = reports.len() as f64;
    let mean = |f: fn(&EvalReport) -> f64| reports.iter().map(f).sum::<f64>() / n;
    Some(EvalReport {
        mse: mean(|r| r.mse),
        mae: mean(|r| r.mae),
        rmse: mean(|r| r.rmse),
        valid_pixel_count: reports.iter().map(|r| r.valid_pixel_count).sum(),
        consistency: mean(|r| r.consistency),
        wall_time: mean(|r| r.wall_time),
    })
}
