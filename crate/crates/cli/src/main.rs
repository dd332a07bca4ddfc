mod commands;
mod selftest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use circlecal::synthetic::WeightMode;
use circlecal::Estimator;

/// Synthetic circle-grid calibration experiments.
#[derive(Debug, Parser)]
#[command(name = "circlecal", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Run everything on the calling thread.
    #[arg(long, global = true)]
    sequential: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Sample a scene and render its views to PGM images.
    GenScene(GenSceneArgs),
    /// Measure blob centroids (or oracle centroids) for every view of a scene.
    Measure(MeasureArgs),
    /// Calibrate intrinsics and distortion from a measurements CSV.
    Calibrate(CalibrateArgs),
    /// Estimator error against the dense oracle over a radius × distortion grid.
    Sweep(SweepArgs),
    /// Solve AX = YB on pose pairs and report the pose error.
    EvalPose(EvalPoseArgs),
    /// Check closed forms against independent quadrature.
    Selftest(SelftestArgs),
}

#[derive(Debug, Args)]
struct GenSceneArgs {
    /// Scene configuration JSON; defaults to the 1200×930 reference camera.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    views: Option<usize>,
    /// Radial coefficients d1,d2,... (reference default: -0.2).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    distortion: Option<Vec<f64>>,
    /// Gaussian blur sigma in pixels.
    #[arg(long)]
    blur: Option<f64>,
    /// Write scene.json only.
    #[arg(long)]
    no_images: bool,
    /// Also write synthetic motion-capture poses for a random hand-eye setup.
    #[arg(long)]
    hand_eye: bool,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Weight {
    Uniform,
    Intensity,
}

impl From<Weight> for WeightMode {
    fn from(w: Weight) -> Self {
        match w {
            Weight::Uniform => WeightMode::Uniform,
            Weight::Intensity => WeightMode::Intensity,
        }
    }
}

#[derive(Debug, Args)]
struct MeasureArgs {
    #[arg(long)]
    scene: PathBuf,
    /// Directory holding view_####.pgm; defaults to the scene file's directory.
    #[arg(long, conflicts_with_all = ["oracle", "render"])]
    images: Option<PathBuf>,
    /// Exact centroids from dense quadrature instead of images.
    #[arg(long, conflicts_with = "render")]
    oracle: bool,
    /// Quadrature samples per circle in oracle mode.
    #[arg(long, requires = "oracle")]
    oracle_samples: Option<usize>,
    /// Render views in memory instead of reading images.
    #[arg(long)]
    render: bool,
    /// Override the scene blur when rendering.
    #[arg(long, requires = "render")]
    blur: Option<f64>,
    #[arg(long, value_enum, default_value = "uniform")]
    weight: Weight,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct CalibrateArgs {
    #[arg(long)]
    measurements: PathBuf,
    /// Scene JSON providing the target layout.
    #[arg(long, required_unless_present = "target")]
    scene: Option<PathBuf>,
    /// Target layout JSON, as an alternative to --scene.
    #[arg(long, conflicts_with = "scene")]
    target: Option<PathBuf>,
    /// Solver options JSON.
    #[arg(long)]
    config: Option<PathBuf>,
    /// unbiased | point | conic | numerical:<samples>
    #[arg(long)]
    estimator: Option<Estimator>,
    /// Number of radial coefficients to estimate.
    #[arg(long)]
    n_distortion: Option<usize>,
    #[arg(long)]
    skew: bool,
    /// Calibrate on this many randomly chosen views per repeat.
    #[arg(long)]
    subset: Option<usize>,
    #[arg(long, default_value_t = 1)]
    repeats: usize,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory for calibration.json and residuals.csv.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct SweepArgs {
    /// Sweep configuration JSON.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_delimiter = ',')]
    radii: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    d1: Option<Vec<f64>>,
    #[arg(long)]
    scenes: Option<usize>,
    /// Comma-separated estimators to compare.
    #[arg(long, value_delimiter = ',')]
    estimator: Option<Vec<Estimator>>,
    #[arg(long)]
    oracle_samples: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct EvalPoseArgs {
    /// Pose pairs JSON: [{"T_mo": [axis_angle, t], "T_ct": [axis_angle, t]}, ...]
    #[arg(long, required_unless_present = "calibration")]
    pairs: Option<PathBuf>,
    /// calibration.json whose view poses supply T_ct.
    #[arg(long, conflicts_with = "pairs", requires = "mocap")]
    calibration: Option<PathBuf>,
    /// Motion-capture poses per view, as written by gen-scene --hand-eye.
    #[arg(long)]
    mocap: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct SelftestArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let exec = if cli.sequential {
        circlecal::Execution::Sequential
    } else {
        circlecal::Execution::Parallel
    };
    let result = match cli.command {
        Command::GenScene(a) => commands::gen_scene(a, exec),
        Command::Measure(a) => commands::measure(a, exec),
        Command::Calibrate(a) => commands::calibrate(a, exec),
        Command::Sweep(a) => commands::sweep(a, exec),
        Command::EvalPose(a) => commands::eval_pose(a),
        Command::Selftest(a) => selftest::run(a.seed),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {:#}", e.error);
            ExitCode::from(e.code)
        }
    }
}
