use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use lidarfuse::calib::{CalibrationBundle, CameraId};
use lidarfuse::colorcal::{extract_patch_means, fit_coefficients, ColorChart};
use lidarfuse::coverage::{coverage_report, CameraLayout, LayoutCamera};
use lidarfuse::enhance::{charbonnier, psnr, should_enhance, ssim, BuiltinEnhancer, Enhancer};
use lidarfuse::framesync::{is_blurry, mean_brightness, pair_timestamps, sync_stats, SyncParams};
use lidarfuse::fuse::{benchmark_fusion, coloured_fraction, colourise_frame, SyncedFrame};
use lidarfuse::geometry::PointCloud;
use lidarfuse::io::{self, DatasetIndex, ImageFormat};
use lidarfuse::pipeline::{run_pipeline, PipelineConfig};
use lidarfuse::register::{calibrate_extrinsics, ExtrinsicParams};
use lidarfuse::sfm::{reconstruct, BundleParams, CameraPose, PairMatch, RansacParams};
use lidarfuse::sim::{
    fusion_workload, generate_scene, simulate_capture, write_dataset, CaptureParams, SceneSpec, SensorModel, SensorRig,
    SequenceSpec,
};
use lidarfuse::{Error, Result};
use serde::Serialize;
use serde_json::json;

use crate::{
    BenchArgs, Cli, ColorArgs, Command, CoverageArgs, EnhanceArgs, ExtrinsicArgs, Format, FuseArgs, MetricsArgs,
    ReconstructArgs, RunArgs, Sensor, SimulateArgs, SyncArgs,
};

pub fn dispatch(cli: &Cli) -> Result<()> {
    let report = match &cli.command {
        Command::Simulate(args) => simulate(cli, args)?,
        Command::CalibrateColor(args) => calibrate_color(cli, args)?,
        Command::CalibrateExtrinsic(args) => calibrate_extrinsic(cli, args)?,
        Command::Coverage(args) => coverage(cli, args)?,
        Command::Sync(args) => sync(args)?,
        Command::Enhance(args) => enhance(args)?,
        Command::Metrics(args) => metrics(args)?,
        Command::Fuse(args) => fuse(cli, args)?,
        Command::Bench(args) => bench(cli, args)?,
        Command::Run(args) => run(cli, args)?,
        Command::Reconstruct(args) => reconstruct_views(cli, args)?,
    };
    emit(cli.out.as_deref(), &report)
}

fn emit(out: Option<&Path>, report: &serde_json::Value) -> Result<()> {
    match out {
        Some(path) => io::save_json(path, report),
        None => {
            let text = serde_json::to_string_pretty(report).expect("reports serialise");
            let mut stdout = std::io::stdout().lock();
            writeln!(stdout, "{text}").map_err(|e| Error::io("<stdout>", e))
        }
    }
}

fn to_json(value: &impl Serialize) -> serde_json::Value {
    serde_json::to_value(value).expect("reports serialise")
}

fn calib_path(cli: &Cli) -> Result<&Path> {
    let path = cli
        .calib
        .as_deref()
        .ok_or_else(|| Error::Configuration("--calib <bundle.json> is required".into()))?;
    if !path.is_file() {
        return Err(Error::Configuration(format!(
            "calibration bundle {} not found",
            path.display()
        )));
    }
    Ok(path)
}

fn load_bundle(cli: &Cli) -> Result<(PathBuf, CalibrationBundle)> {
    let path = calib_path(cli)?;
    Ok((path.to_path_buf(), CalibrationBundle::load(path)?))
}

fn simulate(cli: &Cli, args: &SimulateArgs) -> Result<serde_json::Value> {
    let mut spec: SceneSpec = match &args.scene {
        Some(path) => io::load_json(path)?,
        None => SceneSpec::seeded(cli.seed, args.objects),
    };
    spec.seed = cli.seed;
    let scene = generate_scene(&spec)?;
    let rig = SensorRig::ring(args.cameras);
    let sequence = SequenceSpec {
        frames: args.frames,
        lighting: args.lighting,
        sensor: match args.sensor {
            Sensor::Ideal => SensorModel::Ideal,
            Sensor::Consumer => SensorModel::CONSUMER,
        },
        image_format: match args.format {
            Format::Ppm => ImageFormat::Ppm,
            Format::Png => ImageFormat::Png,
        },
        ..SequenceSpec::default()
    };
    let summary = write_dataset(&args.dir, &scene, &rig, &sequence)?;
    let mut report = to_json(&summary);
    if args.capture {
        let params = CaptureParams {
            scale: args.capture_scale,
            seed: cli.seed,
            ..CaptureParams::default()
        };
        let capture = simulate_capture(&scene, &rig, &sequence.rig_pose(), &params)?;
        let dir = args.dir.join("capture");
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        io::save_cloud(dir.join("lidar.ply"), &capture.lidar)?;
        io::save_cloud(dir.join("sfm.ply"), &capture.sfm)?;
        io::save_json(dir.join("poses.json"), &capture.poses)?;
        report["capture"] = json!({
            "dir": dir,
            "lidar_points": capture.lidar.len(),
            "sfm_points": capture.sfm.len(),
            "views": capture.poses.len(),
        });
    }
    Ok(report)
}

fn calibrate_color(cli: &Cli, args: &ColorArgs) -> Result<serde_json::Value> {
    let (path, mut bundle) = load_bundle(cli)?;
    let img = io::load_image(&args.image)?;
    let chart = ColorChart::checker_grid(args.origin_x, args.origin_y, args.patch, args.gap)?;
    let observed = extract_patch_means(&img, &chart)?;
    let coefficients = fit_coefficients(&observed, &chart.reference_rgb)?;
    let camera = bundle
        .cameras
        .iter_mut()
        .find(|c| c.id == CameraId(args.camera))
        .ok_or_else(|| Error::Configuration(format!("camera {} not in the bundle", args.camera)))?;
    camera.color = coefficients;
    if !args.dry_run {
        bundle.save(&path)?;
    }
    Ok(json!({ "camera": args.camera, "coefficients": coefficients, "written": !args.dry_run }))
}

fn calibrate_extrinsic(cli: &Cli, args: &ExtrinsicArgs) -> Result<serde_json::Value> {
    let (path, mut bundle) = load_bundle(cli)?;
    let lidar = io::load_cloud(&args.lidar)?;
    let sfm = io::load_cloud(&args.sfm)?;
    let poses: Vec<CameraPose> = io::load_json(&args.poses)?;
    let params: ExtrinsicParams = match &args.params {
        Some(p) => io::load_json(p)?,
        None => ExtrinsicParams::default(),
    };
    let calibration = calibrate_extrinsics(&lidar, &sfm, &poses, &params)?;
    for (view, extrinsic) in &calibration.extrinsics {
        let count = bundle.cameras.len();
        let camera = bundle
            .cameras
            .get_mut(*view)
            .ok_or_else(|| Error::Configuration(format!("view {view} has no camera in a bundle of {count}")))?;
        camera.extrinsic = *extrinsic;
    }
    bundle.diagnostics = Some(json!({
        "scale": calibration.scale,
        "overall_score": calibration.overall_score,
        "final_residual": calibration.final_residual,
    }));
    if !args.dry_run {
        bundle.save(&path)?;
    }
    Ok(to_json(&calibration))
}

fn coverage(cli: &Cli, args: &CoverageArgs) -> Result<serde_json::Value> {
    let layout = match args.ring {
        Some(n) => CameraLayout::new(
            (0..n)
                .map(|i| LayoutCamera::new(360.0 * i as f64 / n as f64, args.offset, args.half_fov))
                .collect(),
        )?,
        None => load_bundle(cli)?.1.layout()?,
    };
    Ok(to_json(&coverage_report(&layout, args.radius)?))
}

fn sync(args: &SyncArgs) -> Result<serde_json::Value> {
    let index = DatasetIndex::scan(&args.dataset)?;
    let params = SyncParams {
        max_delta_ns: (args.max_delta_ms * 1e6).round() as i64,
        blur_threshold: args.blur_threshold,
    };
    let ids = index.camera_ids();
    let stamps: Vec<Vec<i64>> = ids.iter().map(|&id| index.camera_timestamps(id)).collect();
    let (mut blurry, mut unreadable) = (0usize, 0usize);
    let bundles = pair_timestamps(
        &index.lidar_timestamps(),
        &stamps,
        &params,
        |k, i| match io::load_image(&index.cameras[&ids[k]][i].path) {
            Ok(img) => {
                let sharp = !is_blurry(&img, params.blur_threshold)?;
                blurry += usize::from(!sharp);
                Ok(sharp)
            }
            Err(e) => {
                log::warn!("skipping unreadable image: {e}");
                unreadable += 1;
                Ok(false)
            }
        },
    )?;
    let stats = sync_stats(&bundles, ids.len());
    Ok(json!({
        "cameras": ids,
        "blurry_rejected": blurry,
        "unreadable_images": unreadable,
        "stats": stats,
        "bundles": bundles,
    }))
}

fn enhance(args: &EnhanceArgs) -> Result<serde_json::Value> {
    let img = io::load_image(&args.input)?;
    let before = mean_brightness(&img);
    let gated = should_enhance(&img, args.threshold);
    let (out, no_signal) = if gated || args.force {
        let result = BuiltinEnhancer::new(args.target)?.enhance(&img)?;
        (result.image, result.no_signal)
    } else {
        (img, false)
    };
    io::save_image(&args.output, &out)?;
    Ok(json!({
        "gate_fired": gated,
        "enhanced": gated || args.force,
        "no_signal": no_signal,
        "brightness_before": before,
        "brightness_after": mean_brightness(&out),
        "output": args.output,
    }))
}

fn metrics(args: &MetricsArgs) -> Result<serde_json::Value> {
    let reference = io::load_image(&args.reference)?;
    let test = io::load_image(&args.test)?;
    Ok(json!({
        "psnr_db": psnr(&reference, &test)?,
        "ssim": ssim(&reference, &test)?,
        "charbonnier": charbonnier(&reference, &test, args.epsilon)?,
    }))
}

fn fuse(cli: &Cli, args: &FuseArgs) -> Result<serde_json::Value> {
    let (_, bundle) = load_bundle(cli)?;
    let cloud = io::load_cloud(&args.cloud)?;
    let images = args
        .images
        .iter()
        .map(|(id, path)| Ok(io::load_image(path)?.with_meta(cloud.timestamp_ns, *id)))
        .collect::<Result<Vec<_>>>()?;
    let frame = SyncedFrame::new(cloud, images);
    let fused = colourise_frame(&frame, &bundle, args.strategy)?;
    io::save_colourised(&args.output, &fused)?;
    let fraction = if fused.is_empty() {
        0.0
    } else {
        coloured_fraction(&fused)?
    };
    Ok(json!({
        "strategy": args.strategy,
        "points": fused.len(),
        "coloured": fused.coloured_count(),
        "coloured_fraction": fraction,
        "output": args.output,
    }))
}

fn bench(cli: &Cli, args: &BenchArgs) -> Result<serde_json::Value> {
    let (calib, frames) = fusion_workload(args.points, args.cameras, args.frames, cli.seed)?;
    let report = benchmark_fusion(&frames, &calib)?;
    if let Some(path) = &args.csv {
        std::fs::write(path, report.to_csv()).map_err(|e| Error::io(path, e))?;
    }
    let mut value = to_json(&report);
    value["threads"] = json!(rayon::current_num_threads());
    Ok(value)
}

/// Timestamps of LiDAR frame paths, one per line; blank lines are ignored.
fn stdin_frames(input: impl BufRead) -> Result<Vec<i64>> {
    let mut frames = Vec::new();
    for line in input.lines() {
        let line = line.map_err(|e| Error::io("<stdin>", e))?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let stamp = Path::new(line)
            .file_stem()
            .and_then(|s| s.to_str())
            .and_then(|s| s.parse::<i64>().ok())
            .ok_or_else(|| Error::MalformedStream(format!("{line:?} is not a <timestamp_ns>.ply path")))?;
        frames.push(stamp);
    }
    Ok(frames)
}

fn run(cli: &Cli, args: &RunArgs) -> Result<serde_json::Value> {
    let mut config = match &args.config {
        Some(path) => io::load_json::<PipelineConfig>(path)?,
        None => PipelineConfig::new(
            &args.dataset,
            &args.output,
            args.dataset.join(lidarfuse::sim::CALIBRATION_FILE),
        ),
    };
    config.input = args.dataset.clone();
    config.output = args.output.clone();
    if cli.calib.is_some() {
        config.calibration = calib_path(cli)?.to_path_buf();
    }
    if let Some(strategy) = args.strategy {
        config.strategy = strategy;
    }
    if args.stdin {
        config.frames = Some(stdin_frames(std::io::stdin().lock())?);
    }
    let (report, timings) = run_pipeline(&config)?;
    let mut value = to_json(&report);
    if args.timings {
        value["timings_s"] = to_json(&timings);
    }
    Ok(value)
}

fn reconstruct_views(cli: &Cli, args: &ReconstructArgs) -> Result<serde_json::Value> {
    let (_, bundle) = load_bundle(cli)?;
    let camera = bundle
        .camera(CameraId(args.camera))
        .ok_or_else(|| Error::Configuration(format!("camera {} not in the bundle", args.camera)))?;
    let matches: Vec<PairMatch> = io::load_json(&args.matches)?;
    let recon = reconstruct(
        &matches,
        &camera.intrinsics,
        &RansacParams::default(),
        &BundleParams::default(),
    )?;
    if let Some(path) = &args.cloud {
        io::save_cloud(path, &PointCloud::from_points(recon.points.clone()))?;
    }
    if let Some(path) = &args.poses {
        io::save_json(path, &recon.poses)?;
    }
    Ok(json!({
        "views": recon.poses.iter().map(|p| p.view).collect::<Vec<_>>(),
        "poses": recon.poses,
        "points": recon.points.len(),
        "rms_px": recon.rms_px,
        "bundle_iterations": recon.bundle_iterations,
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stdin_paths_become_timestamps() {
        let input = "data/lidar/100.ply\n\n  /x/lidar/250.ply  \n";
        assert_eq!(stdin_frames(input.as_bytes()).unwrap(), vec![100, 250]);
        let err = stdin_frames("lidar/frame.ply\n".as_bytes()).unwrap_err();
        assert_eq!(err.class(), lidarfuse::ErrorClass::Data);
    }
}
