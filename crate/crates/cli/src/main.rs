//! `dip3d` command-line tool.
//!
//! ```text
//! dip3d simulate scene.json --count 10 --seed 7 --out frames/ --calib-out calib.json
//! dip3d resolve --calib calib.json --out results/ frames/
//! dip3d evaluate results/ frames/ --out report/ --plots
//! dip3d sweep scene.json --depths 2,4,6 --sigmas 0,1 --n 200 --out sweep/
//! ```
//!
//! Exit codes: 0 success, 1 fatal error, 2 at least one frame rejected.

mod commands;
mod files;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use dip3d::candidates::SideRule;
use dip3d::config::PipelineConfig;
use dip3d::pointing::TieBreak;

#[derive(Parser, Debug)]
#[command(
    name = "dip3d",
    version,
    about = "Resolve which object a diver points at from stereo frames"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Resolve frame documents (files or directories of `*.frame`).
    Resolve(ResolveArgs),
    /// Generate seeded synthetic frames and their ground truth.
    Simulate(SimulateArgs),
    /// Score result documents against ground truth.
    Evaluate(EvaluateArgs),
    /// Accuracy over a grid of scene depths and pixel noise levels.
    Sweep(SweepArgs),
}

#[derive(Args, Debug)]
struct ResolveArgs {
    /// Calibration document.
    #[arg(long)]
    calib: PathBuf,
    #[command(flatten)]
    pipeline: PipelineArgs,
    /// Directory for `{frame_id}.result` documents; printed to stdout if omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overwrite existing result documents.
    #[arg(long)]
    force: bool,
    #[arg(required = true)]
    frames: Vec<PathBuf>,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    /// Scene spec document.
    spec: PathBuf,
    #[arg(long, default_value_t = 1)]
    count: usize,
    /// Batch seed; defaults to the spec's `seed`.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
    /// Also write the spec's calibration document here.
    #[arg(long)]
    calib_out: Option<PathBuf>,
    /// Write into a non-empty output directory.
    #[arg(long)]
    force: bool,
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    /// Directory of `*.result` documents.
    results: PathBuf,
    /// Directory of `*.truth` documents.
    truth: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Pixel radius for attributing a prediction to an object.
    #[arg(long)]
    association_radius: Option<f64>,
    /// Also write a selection histogram as SVG.
    #[arg(long)]
    plots: bool,
    #[arg(long)]
    force: bool,
}

#[derive(Args, Debug)]
struct SweepArgs {
    /// Scene spec document; its objects are shifted to each depth.
    spec: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "2,4,6")]
    depths: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "1")]
    sigmas: Vec<f64>,
    /// Scenes per cell.
    #[arg(long, default_value_t = 1000)]
    n: usize,
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    pipeline: PipelineArgs,
    #[arg(long)]
    association_radius: Option<f64>,
    #[arg(long)]
    out: PathBuf,
    /// Also write one SVG histogram per cell.
    #[arg(long)]
    plots: bool,
    #[arg(long)]
    force: bool,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SideArg {
    Auto,
    KeepLeft,
    KeepRight,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum TieArg {
    ClosestZ,
    LowestIndex,
}

/// Pipeline settings. Flags override the config file, which overrides the
/// built-in defaults.
#[derive(Args, Debug, Default)]
struct PipelineArgs {
    /// TOML pipeline configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long)]
    mask_offset: Option<f64>,
    #[arg(long, value_enum)]
    side_rule: Option<SideArg>,
    #[arg(long)]
    ratio: Option<f64>,
    #[arg(long)]
    epipolar_tolerance: Option<f64>,
    #[arg(long)]
    min_disparity: Option<f64>,
    #[arg(long)]
    scale_factor: Option<f64>,
    #[arg(long)]
    z_gap_max: Option<f64>,
    #[arg(long, value_enum)]
    tie_break: Option<TieArg>,
    /// Accept frames without a shoulder and skip the elbow–shoulder check.
    #[arg(long)]
    no_shoulder_filter: bool,
}

impl PipelineArgs {
    fn load(&self) -> anyhow::Result<PipelineConfig> {
        let mut cfg = match &self.config {
            Some(path) => PipelineConfig::from_toml(&files::read(path, "config")?)
                .map_err(|e| anyhow::anyhow!("config {}: {e}", path.display()))?,
            None => PipelineConfig::default(),
        };
        self.apply(&mut cfg);
        cfg.validate()?;
        Ok(cfg)
    }

    fn apply(&self, cfg: &mut PipelineConfig) {
        if let Some(v) = self.mask_offset {
            cfg.mask.offset_px = v;
        }
        if let Some(v) = self.side_rule {
            cfg.mask.side_rule = match v {
                SideArg::Auto => SideRule::AutoFromArm,
                SideArg::KeepLeft => SideRule::KeepLeftOfWrist,
                SideArg::KeepRight => SideRule::KeepRightOfWrist,
            };
        }
        if let Some(v) = self.ratio {
            cfg.matching.ratio_threshold = v;
        }
        if let Some(v) = self.epipolar_tolerance {
            cfg.matching.epipolar_tolerance_px = v;
        }
        if let Some(v) = self.min_disparity {
            cfg.matching.min_disparity_px = v;
        }
        if let Some(v) = self.scale_factor {
            cfg.pointing.scale_factor = v;
        }
        if let Some(v) = self.z_gap_max {
            cfg.pointing.z_gap_max = v;
        }
        if let Some(v) = self.tie_break {
            cfg.pointing.tie_break = match v {
                TieArg::ClosestZ => TieBreak::ClosestZ,
                TieArg::LowestIndex => TieBreak::LowestIndex,
            };
        }
        if self.no_shoulder_filter {
            cfg.pointing.shoulder_filter = false;
        }
        if let Some(j) = self.jobs {
            cfg.run.jobs = j;
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Resolve(a) => commands::resolve(a),
        Command::Simulate(a) => commands::simulate(a),
        Command::Evaluate(a) => commands::evaluate(a),
        Command::Sweep(a) => commands::sweep(a),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
