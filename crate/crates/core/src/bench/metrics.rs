use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::DepthGrid;
use crate::scalar::Real;

/// Error statistics of one prediction against ground truth.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub mse: f64,
    pub mae: f64,
    pub rmse: f64,
    pub valid_pixel_count: usize,
    /// Relative source-consistency residual of the prediction.
    pub consistency: f64,
    /// Seconds spent producing the prediction.
    pub wall_time: f64,
}

/// MSE, MAE and RMSE over pixels valid in both grids. `consistency` and
/// `wall_time` are left at zero for the caller to fill in.
pub fn compute_metrics<T: Real>(pred: &DepthGrid<T>, gt: &DepthGrid<T>) -> Result<EvalReport> {
    if pred.dims() != gt.dims() {
        return Err(Error::dims(format!(
            "prediction is {}x{}, ground truth {}x{}",
            pred.height(),
            pred.width(),
            gt.height(),
            gt.width()
        )));
    }
    let (mut se, mut ae, mut n) = (0.0f64, 0.0f64, 0usize);
    for i in 0..gt.len() {
        if pred.is_valid_index(i) && gt.is_valid_index(i) {
            let d = pred.values()[i].as_f64() - gt.values()[i].as_f64();
            se += d * d;
            ae += d.abs();
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::NoValidPixels);
    }
    let mse = se / n as f64;
    Ok(EvalReport {
        mse,
        mae: ae / n as f64,
        rmse: mse.sqrt(),
        valid_pixel_count: n,
        ..Default::default()
    })
}
