use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use depthdiff::bench::aggregate;
use depthdiff::io::{read_depth, read_guide, read_mask, write_depth};
use depthdiff::{
    bicubic_upsample, make_lowres, run_benchmark, solve, DepthMap, EvalReport, InitMode, Lambda, ScaleFactor,
    SolverConfig,
};
use log::info;
use serde_json::json;

/// Guided depth super-resolution by constrained anisotropic diffusion.
#[derive(Debug, Parser)]
#[command(name = "depthdiff", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Super-resolve a low-resolution depth map with a high-resolution guide.
    Upsample {
        #[arg(long)]
        source: PathBuf,
        #[arg(long)]
        guide: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        solver: SolverArgs,
    },
    /// Downsample ground truth, super-resolve it, and score against bicubic.
    Eval {
        /// Ground-truth depth; repeat together with --guide for several images.
        #[arg(long, required = true)]
        gt: Vec<PathBuf>,
        #[arg(long, required = true)]
        guide: Vec<PathBuf>,
        /// Factor applied to depth errors before reporting (e.g. to centimetres).
        #[arg(long, default_value_t = 1.0, value_parser = positive_real)]
        depth_scale: f64,
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        solver: SolverArgs,
    },
    /// Write the block-mean low-resolution version of a depth map.
    MakeLowres {
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Bicubic upsampling of a depth map.
    Baseline {
        #[arg(long)]
        source: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Debug, Args)]
struct Common {
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..))]
    scale: u32,
    /// Grayscale PNG; zero marks invalid depth pixels.
    #[arg(long)]
    mask: Option<PathBuf>,
    /// Worker threads (default: available parallelism).
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..))]
    threads: Option<u32>,
}

#[derive(Debug, Args)]
struct SolverArgs {
    #[arg(long, default_value_t = depthdiff::DEFAULT_ITERATIONS, value_parser = positive_count)]
    iters: usize,
    #[arg(long, default_value_t = 0.24, value_parser = lambda)]
    lambda: f64,
    #[arg(long, default_value_t = depthdiff::DEFAULT_KAPPA, value_parser = positive_real)]
    kappa: f64,
    #[arg(long, default_value = "bicubic", value_parser = ["constant", "nearest", "bicubic"])]
    init: String,
    #[arg(long)]
    append_source_channel: bool,
    #[arg(long, default_value_t = 0.0, value_parser = non_negative_real)]
    residual_tol: f64,
    #[arg(long, default_value_t = 0)]
    log_every: usize,
}

fn parse_real(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("{s:?} is not a number"))?;
    if !v.is_finite() {
        return Err(format!("{s} is not finite"));
    }
    Ok(v)
}

fn positive_count(s: &str) -> Result<usize, String> {
    match s.parse::<usize>() {
        Ok(0) => Err("must be at least 1".into()),
        Ok(v) => Ok(v),
        Err(_) => Err(format!("{s:?} is not a positive integer")),
    }
}

fn positive_real(s: &str) -> Result<f64, String> {
    let v = parse_real(s)?;
    if v > 0.0 {
        Ok(v)
    } else {
        Err(format!("{v} must be positive"))
    }
}

fn non_negative_real(s: &str) -> Result<f64, String> {
    let v = parse_real(s)?;
    if v >= 0.0 {
        Ok(v)
    } else {
        Err(format!("{v} must not be negative"))
    }
}

fn lambda(s: &str) -> Result<f64, String> {
    let v = parse_real(s)?;
    Lambda::new(v).map(Lambda::get).map_err(|e| e.to_string())
}

impl SolverArgs {
    fn config(&self) -> SolverConfig {
        SolverConfig {
            lambda: Lambda::new_unchecked(self.lambda),
            kappa: self.kappa,
            iterations: self.iters,
            init: self.init.parse().unwrap_or(InitMode::Bicubic),
            residual_tol: self.residual_tol,
            append_source_channel: self.append_source_channel,
            log_every: self.log_every,
        }
    }
}

fn load_depth(path: &Path, mask: Option<&Path>) -> depthdiff::Result<DepthMap> {
    let depth = read_depth(path)?;
    let Some(mask_path) = mask else {
        return Ok(depth);
    };
    let m = read_mask(mask_path)?;
    if (m.height, m.width) != depth.dims() {
        return Err(depthdiff::Error::DimensionMismatch(format!(
            "mask is {}x{} but depth is {}x{}",
            m.height,
            m.width,
            depth.height(),
            depth.width()
        )));
    }
    let combined = (0..depth.len())
        .map(|i| depth.is_valid_index(i) && m.valid[i])
        .collect();
    depth.masked(Some(combined))
}

fn scaled(r: EvalReport, k: f64) -> EvalReport {
    EvalReport {
        mse: r.mse * k * k,
        mae: r.mae * k,
        rmse: r.rmse * k,
        ..r
    }
}

fn run(command: Command) -> depthdiff::Result<()> {
    match command {
        Command::Upsample {
            source,
            guide,
            out,
            common,
            solver,
        } => {
            let s = ScaleFactor::new(common.scale as usize)?;
            let src = load_depth(&source, common.mask.as_deref())?;
            let g = read_guide(&guide)?;
            let (y, diag) = solve(&src, &g, s, &solver.config())?;
            write_depth(&out, &y)?;
            info!("wrote {}", out.display());
            println!("{}", serde_json::to_string(&diag).expect("diagnostics serialize"));
        }
        Command::Eval {
            gt,
            guide,
            depth_scale,
            common,
            solver,
        } => {
            if gt.len() != guide.len() {
                return Err(depthdiff::Error::InvalidConfig(format!(
                    "{} --gt paths but {} --guide paths",
                    gt.len(),
                    guide.len()
                )));
            }
            let s = ScaleFactor::new(common.scale as usize)?;
            let config = solver.config();
            let (mut dada, mut bicubic) = (Vec::new(), Vec::new());
            for (gt_path, guide_path) in gt.iter().zip(&guide) {
                let truth = load_depth(gt_path, common.mask.as_deref())?;
                let g = read_guide(guide_path)?;
                let reports = run_benchmark(&truth, &g, s, &config)?;
                let (d, b) = (scaled(reports.dada, depth_scale), scaled(reports.bicubic, depth_scale));
                println!("{}", json!({ "gt": gt_path, "dada": d, "bicubic": b }));
                dada.push(d);
                bicubic.push(b);
            }
            println!(
                "{}",
                json!({ "aggregate": { "images": dada.len(), "dada": aggregate(&dada), "bicubic": aggregate(&bicubic) } })
            );
        }
        Command::MakeLowres { gt, out, common } => {
            let s = ScaleFactor::new(common.scale as usize)?;
            let truth = load_depth(&gt, common.mask.as_deref())?;
            write_depth(&out, &make_lowres(&truth, s)?)?;
        }
        Command::Baseline { source, out, common } => {
            let s = ScaleFactor::new(common.scale as usize)?;
            let src = load_depth(&source, common.mask.as_deref())?;
            write_depth(&out, &bicubic_upsample(&src, s))?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let usage = e.use_stderr();
            let _ = e.print();
            return if usage { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };

    let (threads, log_every) = match &cli.command {
        Command::Upsample { common, solver, .. } | Command::Eval { common, solver, .. } => {
            (common.threads, solver.log_every)
        }
        Command::MakeLowres { common, .. } | Command::Baseline { common, .. } => (common.threads, 0),
    };
    let default_level = if log_every > 0 { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(default_level)).init();

    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(k) = threads {
        pool = pool.num_threads(k as usize);
    }
    let pool = match pool.build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start worker threads: {e}");
            return ExitCode::from(2);
        }
    };

    match pool.install(|| run(cli.command)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
