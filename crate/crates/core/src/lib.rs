//! Guided depth super-resolution by source-constrained anisotropic diffusion.
//!
//! A high-resolution depth estimate is repeatedly diffused with per-edge
//! conductances taken from a guide image, then rescaled block by block so
//! that its area-averaged downsampling reproduces the low-resolution source.
//! The fixed point of this map is the super-resolved depth.
//!
//! The numeric core is generic over [`Real`] (`f32` or `f64`); the aliases
//! below name the two instantiations the crate is used with.

pub mod adjustment;
pub mod bench;
pub mod coefficients;
pub mod diffusion;
pub mod error;
pub mod grid;
pub mod io;
pub mod scalar;
pub mod solver;

pub use adjustment::{
    adjust, adjustment_ratios, block_downsample, consistency_residual, nearest_upsample, AdjustmentRatios,
};
pub use bench::{bicubic_upsample, compute_metrics, make_lowres, run_benchmark, BenchmarkReports, EvalReport};
pub use coefficients::{append_source_channel, compute_coefficients, CoefficientField, DEFAULT_KAPPA};
pub use diffusion::{diffusion_step, dirichlet_energy, Lambda};
pub use error::{Error, Result};
pub use grid::{normalize_guide, validate_pair, DepthGrid, GuideStack, SampleEncoding, ScaleFactor};
pub use scalar::Real;
pub use solver::{equilibrium_oracle, initialize, solve, InitMode, SolveDiagnostics, SolverConfig, DEFAULT_ITERATIONS};

/// Single-precision depth map, the default working type.
pub type DepthMap = DepthGrid<f32>;
/// Double-precision depth map, used by the reference solver.
pub type DepthMap64 = DepthGrid<f64>;
pub type Guide = GuideStack<f32>;
pub type Guide64 = GuideStack<f64>;
pub type Coefficients = CoefficientField<f32>;
pub type Coefficients64 = CoefficientField<f64>;
