use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use lidarfuse::fuse::FusionStrategy;
use lidarfuse::{Error, ErrorClass};

mod commands;

#[derive(Parser, Debug)]
#[command(name = "lidarfuse", version, about = "Colourise LiDAR scans from a ring of cameras")]
struct Cli {
    /// Calibration bundle (JSON).
    #[arg(long, global = true)]
    calib: Option<PathBuf>,
    /// Seed for every random draw.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads; defaults to the number of cores.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[arg(long, global = true, value_enum, default_value_t = LogLevel::Warn)]
    log_level: LogLevel,
    /// Write the JSON report here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum LogLevel {
    Off,
    Error,
    Warn,
    Info,
    Debug,
    Trace,
}

impl LogLevel {
    fn filter(self) -> log::LevelFilter {
        match self {
            LogLevel::Off => log::LevelFilter::Off,
            LogLevel::Error => log::LevelFilter::Error,
            LogLevel::Warn => log::LevelFilter::Warn,
            LogLevel::Info => log::LevelFilter::Info,
            LogLevel::Debug => log::LevelFilter::Debug,
            LogLevel::Trace => log::LevelFilter::Trace,
        }
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Render a synthetic recording and its ground-truth calibration.
    Simulate(SimulateArgs),
    /// Fit per-channel colour correction from a chart image.
    CalibrateColor(ColorArgs),
    /// Recover LiDAR-to-camera extrinsics from a scan and a reconstruction.
    CalibrateExtrinsic(ExtrinsicArgs),
    /// Coverage radius and blind sectors of the camera layout.
    Coverage(CoverageArgs),
    /// Pair camera frames with LiDAR frames.
    Sync(SyncArgs),
    /// Low-light enhancement of a single image.
    Enhance(EnhanceArgs),
    /// PSNR, SSIM and Charbonnier loss between two images.
    Metrics(MetricsArgs),
    /// Colourise one cloud from explicitly given images.
    Fuse(FuseArgs),
    /// Time both fusion strategies on a synthetic workload.
    Bench(BenchArgs),
    /// Full pipeline over a recorded dataset.
    Run(RunArgs),
    /// Camera poses and sparse points from pixel correspondences.
    Reconstruct(ReconstructArgs),
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum Sensor {
    Ideal,
    Consumer,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum Format {
    Ppm,
    Png,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    /// Output dataset directory.
    dir: PathBuf,
    #[arg(long, default_value_t = 5)]
    frames: usize,
    /// Randomly placed objects; ignored with --scene.
    #[arg(long, default_value_t = 5)]
    objects: usize,
    /// Scene description (JSON) instead of a generated one.
    #[arg(long)]
    scene: Option<PathBuf>,
    #[arg(long, default_value_t = 4)]
    cameras: u8,
    /// Luma multiplier in (0, 1].
    #[arg(long, default_value_t = 1.0)]
    lighting: f64,
    #[arg(long, value_enum, default_value_t = Sensor::Ideal)]
    sensor: Sensor,
    #[arg(long, value_enum, default_value_t = Format::Ppm)]
    format: Format,
    /// Also write a static scan and a scaled reconstruction under `capture/`.
    #[arg(long)]
    capture: bool,
    /// Reconstruction units per metre for --capture.
    #[arg(long, default_value_t = 1.0)]
    capture_scale: f64,
}

#[derive(Args, Debug)]
struct ColorArgs {
    /// Image of the colour chart.
    image: PathBuf,
    /// Camera whose coefficients are replaced in the bundle.
    #[arg(long)]
    camera: u8,
    /// Chart patch grid: top-left corner, patch side and gap in pixels.
    #[arg(long, default_value_t = 40)]
    origin_x: u32,
    #[arg(long, default_value_t = 40)]
    origin_y: u32,
    #[arg(long, default_value_t = 40)]
    patch: u32,
    #[arg(long, default_value_t = 10)]
    gap: u32,
    /// Report the fit without rewriting the bundle.
    #[arg(long)]
    dry_run: bool,
}

#[derive(Args, Debug)]
struct ExtrinsicArgs {
    /// Static LiDAR scan (PLY).
    #[arg(long)]
    lidar: PathBuf,
    /// Reconstruction points (PLY).
    #[arg(long)]
    sfm: PathBuf,
    /// Reconstruction camera poses (JSON); view k is the bundle's k-th camera.
    #[arg(long)]
    poses: PathBuf,
    /// Registration parameters (JSON).
    #[arg(long)]
    params: Option<PathBuf>,
    #[arg(long)]
    dry_run: bool,
}

#[derive(Args, Debug)]
struct CoverageArgs {
    /// Also list blind sectors at this radius in metres.
    #[arg(long)]
    radius: Option<f64>,
    /// Symmetric layout instead of the bundle: camera count.
    #[arg(long)]
    ring: Option<usize>,
    #[arg(long, default_value_t = 0.1)]
    offset: f64,
    #[arg(long, default_value_t = 50.0)]
    half_fov: f64,
}

#[derive(Args, Debug)]
struct SyncArgs {
    dataset: PathBuf,
    #[arg(long, default_value_t = 16.0)]
    max_delta_ms: f64,
    #[arg(long, default_value_t = lidarfuse::framesync::DEFAULT_BLUR_THRESHOLD)]
    blur_threshold: f64,
}

#[derive(Args, Debug)]
struct EnhanceArgs {
    input: PathBuf,
    output: PathBuf,
    #[arg(long, default_value_t = lidarfuse::enhance::DEFAULT_TARGET_BRIGHTNESS)]
    target: f64,
    #[arg(long, default_value_t = lidarfuse::enhance::DEFAULT_BRIGHTNESS_THRESHOLD)]
    threshold: f64,
    /// Enhance even when the image is bright enough.
    #[arg(long)]
    force: bool,
}

#[derive(Args, Debug)]
struct MetricsArgs {
    reference: PathBuf,
    test: PathBuf,
    #[arg(long, default_value_t = 1e-3)]
    epsilon: f64,
}

#[derive(Args, Debug)]
struct FuseArgs {
    cloud: PathBuf,
    output: PathBuf,
    /// `ID=PATH`, repeatable.
    #[arg(long = "image", value_parser = parse_image)]
    images: Vec<(u8, PathBuf)>,
    #[arg(long, default_value = "batched", value_parser = parse_strategy)]
    strategy: FusionStrategy,
}

#[derive(Args, Debug)]
struct BenchArgs {
    #[arg(long, default_value_t = 300_000)]
    points: usize,
    #[arg(long, default_value_t = 4)]
    cameras: u8,
    #[arg(long, default_value_t = 50)]
    frames: usize,
    /// Per-strategy timings as CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct RunArgs {
    dataset: PathBuf,
    output: PathBuf,
    /// Pipeline settings (JSON); paths on the command line take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_parser = parse_strategy)]
    strategy: Option<FusionStrategy>,
    /// Process only the LiDAR frame paths read line by line from stdin.
    #[arg(long)]
    stdin: bool,
    /// Include per-stage wall-clock seconds in the report.
    #[arg(long)]
    timings: bool,
}

#[derive(Args, Debug)]
struct ReconstructArgs {
    /// Correspondences (JSON array of `{view_a, view_b, x, y, x', y'}`).
    matches: PathBuf,
    /// Bundle camera whose intrinsics all views share.
    #[arg(long, default_value_t = 0)]
    camera: u8,
    /// Write the points as PLY.
    #[arg(long)]
    cloud: Option<PathBuf>,
    /// Write the poses as JSON.
    #[arg(long)]
    poses: Option<PathBuf>,
}

fn parse_image(s: &str) -> Result<(u8, PathBuf), String> {
    let (id, path) = s.split_once('=').ok_or("expected ID=PATH")?;
    let id = id.parse::<u8>().map_err(|e| format!("camera id: {e}"))?;
    Ok((id, PathBuf::from(path)))
}

fn parse_strategy(s: &str) -> Result<FusionStrategy, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn exit_status(err: &Error) -> u8 {
    match err.class() {
        ErrorClass::Configuration => 2,
        ErrorClass::Data => 3,
        ErrorClass::Numerical => 4,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new().filter_level(cli.log_level.filter()).init();
    if let Some(jobs) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(jobs.max(1)).build_global() {
            log::warn!("could not size the thread pool: {e}");
        }
    }
    match commands::dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_status(&e))
        }
    }
}
