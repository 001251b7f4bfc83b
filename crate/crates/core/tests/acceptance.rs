//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any criterion fails.

use std::f64::consts::PI;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use nalgebra::{Point3, Rotation3, Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use lidarfuse::calib::{CalibrationBundle, CameraId, CameraModel};
use lidarfuse::colorcal::{fit_coefficients, ColorChart};
use lidarfuse::coverage::{blind_sectors, min_full_coverage_radius, CameraLayout, LayoutCamera};
use lidarfuse::enhance::{psnr, ssim, PSNR_CAP_DB};
use lidarfuse::framesync::{laplacian_variance, pair_frames, SyncParams};
use lidarfuse::fuse::{benchmark_fusion, colourise_frame, FusionStrategy, SyncedFrame};
use lidarfuse::geometry::{CameraIntrinsics, DistortionCoefficients, Image, PointCloud, RigidTransform};
use lidarfuse::pipeline::{run_pipeline, PipelineConfig};
use lidarfuse::register::{calibrate_extrinsics, ExtrinsicParams};
use lidarfuse::sfm::{
    bundle_adjust, decompose_essential, essential_from_fundamental, estimate_fundamental, observation_terms,
    sampson_distance, triangulate, BundleParams, Correspondence, Observation, RansacParams,
};
use lidarfuse::sim::{
    checkerboard_reprojection_px, fusion_workload, generate_scene, simulate_capture, simulate_sequence, write_dataset,
    CaptureParams, SceneSpec, SensorModel, SensorRig, SequenceSpec, CALIBRATION_FILE,
};

struct Outcome {
    passed: bool,
    detail: String,
}

impl Outcome {
    fn new(passed: bool, detail: impl Into<String>) -> Self {
        Self {
            passed,
            detail: detail.into(),
        }
    }
}

type Check = fn() -> Result<Outcome, String>;

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

// ---------------------------------------------------------------- coverage

/// Azimuth, offset and half field of view of one camera, in degrees and metres.
type RawCamera = (f64, f64, f64);

/// Sweep oracle written from first principles: a point is seen when it lies
/// inside some camera's horizontal wedge.
fn sweep_blind(cameras: &[RawCamera], radius: f64, step_deg: f64) -> Vec<bool> {
    let steps = (360.0 / step_deg).round() as usize;
    (0..steps)
        .map(|i| {
            let a = (i as f64 * step_deg).to_radians();
            let p = Vector2::new(radius * a.cos(), radius * a.sin());
            !cameras.iter().any(|&(az, offset, half)| {
                let dir = Vector2::new(az.to_radians().cos(), az.to_radians().sin());
                let rel = p - dir * offset;
                rel.norm() > 0.0 && rel.normalize().dot(&dir) >= half.to_radians().cos()
            })
        })
        .collect()
}

fn blind_runs(blind: &[bool]) -> usize {
    let n = blind.len();
    (0..n).filter(|&i| blind[i] && !blind[(i + n - 1) % n]).count()
}

fn sweep_radius(cameras: &[RawCamera]) -> f64 {
    let (mut lo, mut hi) = (0.0, 10.0);
    for _ in 0..40 {
        let mid = 0.5 * (lo + hi);
        if sweep_blind(cameras, mid, 0.01).iter().any(|&b| b) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}

fn ring_layout(offset: f64) -> Result<(CameraLayout, Vec<RawCamera>), String> {
    let raw: Vec<RawCamera> = [0.0, 90.0, 180.0, 270.0].iter().map(|&az| (az, offset, 50.0)).collect();
    let layout = CameraLayout::new(raw.iter().map(|&(a, o, h)| LayoutCamera::new(a, o, h)).collect()).map_err(err)?;
    Ok((layout, raw))
}

fn criterion_1() -> Result<Outcome, String> {
    let (layout, raw) = ring_layout(0.1)?;
    let analytic = min_full_coverage_radius(&layout).finite().ok_or("radius unbounded")?;
    let oracle = sweep_radius(&raw);
    let above = blind_sectors(&layout, analytic + 1e-3).map_err(err)?;
    let below = blind_sectors(&layout, analytic - 0.05).map_err(err)?;
    let sweep_below = blind_runs(&sweep_blind(&raw, analytic - 0.05, 0.01));
    let mut plausible = Vec::new();
    for offset in [0.05, 0.1, 0.15] {
        let (l, _) = ring_layout(offset)?;
        plausible.push(min_full_coverage_radius(&l).finite().unwrap_or(f64::INFINITY));
    }
    let plausible_ok = plausible.iter().all(|r| r.is_finite() && (0.1..10.0).contains(r));
    let passed = (analytic - 0.879).abs() < 1e-3
        && (analytic - oracle).abs() < 1e-3
        && above.is_empty()
        && below.len() == 4
        && sweep_below == 4
        && plausible_ok;
    Ok(Outcome::new(
        passed,
        format!(
            "analytic {analytic:.4} m, sweep {oracle:.4} m, gaps above/below {}/{}, offsets 0.05/0.10/0.15 m -> {:.3}/{:.3}/{:.3} m",
            above.len(),
            below.len(),
            plausible[0],
            plausible[1],
            plausible[2]
        ),
    ))
}

// ---------------------------------------------------------------- colour

fn criterion_2() -> Result<Outcome, String> {
    let chart = ColorChart::checker_grid(0, 0, 10, 2).map_err(err)?;
    let reference = &chart.reference_rgb;
    let mut rng = ChaCha8Rng::seed_from_u64(2);

    let mut worst_exact: f64 = 0.0;
    let mut exact_r2 = true;
    for _ in 0..10 {
        let gain: [f64; 3] = std::array::from_fn(|_| rng.gen_range(0.6..1.0));
        let offset: [f64; 3] = std::array::from_fn(|_| rng.gen_range(0.0..20.0));
        let observed: Vec<[f64; 3]> = reference
            .iter()
            .map(|r| std::array::from_fn(|c| gain[c] * r[c] + offset[c]))
            .collect();
        let fit = fit_coefficients(&observed, reference).map_err(err)?;
        for (c, ch) in fit.channels().iter().enumerate() {
            worst_exact = worst_exact
                .max((ch.slope - 1.0 / gain[c]).abs())
                .max((ch.intercept + offset[c] / gain[c]).abs());
            exact_r2 &= (ch.fit_r2 - 1.0).abs() < 1e-12;
        }
    }

    let noise = Normal::new(0.0, 2.0).map_err(err)?;
    let mut min_r2 = f64::INFINITY;
    for _ in 0..100 {
        let gain: [f64; 3] = std::array::from_fn(|_| rng.gen_range(0.6..1.0));
        let offset: [f64; 3] = std::array::from_fn(|_| rng.gen_range(0.0..20.0));
        let observed: Vec<[f64; 3]> = reference
            .iter()
            .map(|r| std::array::from_fn(|c| gain[c] * r[c] + offset[c] + noise.sample(&mut rng)))
            .collect();
        let fit = fit_coefficients(&observed, reference).map_err(err)?;
        for ch in fit.channels() {
            min_r2 = min_r2.min(ch.fit_r2);
        }
    }
    Ok(Outcome::new(
        worst_exact < 1e-9 && exact_r2 && min_r2 >= 0.98,
        format!("noiseless worst coefficient error {worst_exact:.1e}, R2 = 1: {exact_r2}; sigma 2 min R2 over 100 trials {min_r2:.4}"),
    ))
}

// ---------------------------------------------------------------- SfM

fn criterion_3() -> Result<Outcome, String> {
    let k = CameraIntrinsics::new(800.0, 800.0, 320.0, 240.0, 640, 480).map_err(err)?;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let poses = [
        RigidTransform::identity(),
        RigidTransform::from_scaled_axis(Vector3::new(0.0, -0.12, 0.01), Vector3::new(-0.8, 0.05, 0.1)),
        RigidTransform::from_scaled_axis(Vector3::new(0.03, 0.1, -0.02), Vector3::new(0.7, -0.1, 0.2)),
    ];
    let points: Vec<Point3<f64>> = (0..20)
        .map(|_| {
            Point3::new(
                rng.gen_range(-1.5..1.5),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(5.0..8.0),
            )
        })
        .collect();
    let pixel = |v: usize, p: &Point3<f64>| k.project(&poses[v].apply(p)).ok_or("point behind camera");
    let mut corrs = Vec::new();
    for p in &points {
        corrs.push(Correspondence::new(pixel(0, p)?, pixel(1, p)?));
    }

    let estimate = estimate_fundamental(&corrs, &RansacParams::default()).map_err(err)?;
    let epipolar = corrs
        .iter()
        .map(|c| estimate.matrix.residual(c).abs())
        .fold(0.0, f64::max);
    let sampson = corrs
        .iter()
        .map(|c| sampson_distance(estimate.matrix.matrix(), c))
        .fold(0.0, f64::max);

    let essential = essential_from_fundamental(&estimate.matrix, &k);
    let relative = decompose_essential(&essential, &corrs, &k).map_err(err)?;
    let rot_err = relative.rotation_angle_to(&poses[1]);
    let t_dir = relative.translation().normalize();
    let t_err = t_dir.angle(&poses[1].translation().normalize());

    let tri_err = points
        .iter()
        .zip(&corrs)
        .map(|(p, c)| triangulate(c, &poses[0], &poses[1], &k).map(|x| (x - p).norm()))
        .collect::<Result<Vec<_>, _>>()
        .map_err(err)?
        .into_iter()
        .fold(0.0, f64::max);

    let mut obs = Vec::new();
    for (i, p) in points.iter().enumerate() {
        for v in 0..3 {
            obs.push(Observation {
                point: i,
                view: v,
                pixel: pixel(v, p)?,
            });
        }
    }
    let mut start = poses.to_vec();
    for (v, pose) in start.iter_mut().enumerate().skip(1) {
        let sign = if v % 2 == 0 { 1.0 } else { -1.0 };
        let nudge = RigidTransform::from_scaled_axis(
            Vector3::new(0.0, sign * 1f64.to_radians(), 0.0),
            Vector3::new(0.05 * sign, 0.0, 0.0),
        );
        *pose = nudge.compose(pose);
    }
    let ba = bundle_adjust(&start, &points, &obs, &k, &BundleParams::default()).map_err(err)?;
    let rms = ba.rms_px(obs.len());
    let monotone = ba.cost_history.windows(2).all(|w| w[1] <= w[0]);

    let mut jac_err: f64 = 0.0;
    let h = 1e-6;
    for (o, p) in obs.iter().zip(points.iter().flat_map(|p| [p, p, p])) {
        let pose = poses[o.view];
        let target = Vector2::new(o.pixel.x, o.pixel.y);
        let residual = |pose: &RigidTransform, x: &Point3<f64>| observation_terms(&k, pose, x, &target).map(|t| t.0);
        let (_, j_pose, j_point) = observation_terms(&k, &pose, p, &target).ok_or("point behind camera")?;
        for c in 0..6 {
            let bump = |s: f64| {
                let mut d = [0.0; 6];
                d[c] = s * h;
                let rot = Rotation3::new(Vector3::new(d[0], d[1], d[2])).into_inner() * pose.rotation();
                RigidTransform::from_approx(&rot, pose.translation() + Vector3::new(d[3], d[4], d[5]))
            };
            let fd = (residual(&bump(1.0), p).ok_or("fd")? - residual(&bump(-1.0), p).ok_or("fd")?) / (2.0 * h);
            jac_err = jac_err.max((fd - j_pose.column(c)).norm() / j_pose.column(c).norm().max(1.0));
        }
        for c in 0..3 {
            let mut e = Vector3::zeros();
            e[c] = h;
            let fd = (residual(&pose, &(p + e)).ok_or("fd")? - residual(&pose, &(p - e)).ok_or("fd")?) / (2.0 * h);
            jac_err = jac_err.max((fd - j_point.column(c)).norm() / j_point.column(c).norm().max(1.0));
        }
    }

    let passed =
        epipolar < 1e-8 && rot_err < 1e-5 && t_err < 1e-5 && tri_err < 1e-9 && rms < 1e-6 && monotone && jac_err < 1e-5;
    Ok(Outcome::new(
        passed,
        format!(
            "epipolar {epipolar:.1e} (Sampson {sampson:.1e} px), R {rot_err:.1e} rad, t dir {t_err:.1e}, triangulation {tri_err:.1e} m, BA rms {rms:.1e} px monotone {monotone}, Jacobian rel {jac_err:.1e}"
        ),
    ))
}

// ---------------------------------------------------------------- extrinsics

fn criterion_4() -> Result<Outcome, String> {
    let rig = SensorRig::default();
    let pose = RigidTransform::from_translation(Vector3::new(0.0, 0.0, 1.0));
    let (mut scale_worst, mut t_worst, mut r_worst, mut px_worst): (f64, f64, f64, f64) = (0.0, 0.0, 0.0, 0.0);
    let mut failures = Vec::new();
    for trial in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(trial);
        let scene = generate_scene(&SceneSpec::seeded(100 + trial, 5)).map_err(err)?;
        let scale = rng.gen_range(0.2f64.ln()..5f64.ln()).exp();
        let axis = Vector3::new(
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        );
        let offset = RigidTransform::from_scaled_axis(
            axis.normalize() * rng.gen_range(0.0..PI),
            Vector3::new(
                rng.gen_range(-5.0..5.0),
                rng.gen_range(-5.0..5.0),
                rng.gen_range(-5.0..5.0),
            ),
        );
        let params = CaptureParams {
            scale,
            offset,
            keep_fraction: 0.5,
            noise: 0.005,
            seed: trial,
            ..CaptureParams::default()
        };
        let capture = simulate_capture(&scene, &rig, &pose, &params).map_err(err)?;
        match calibrate_extrinsics(
            &capture.lidar,
            &capture.sfm,
            &capture.poses,
            &ExtrinsicParams::default(),
        ) {
            Ok(out) => {
                scale_worst = scale_worst.max((out.scale.value() * scale - 1.0).abs());
                for (view, estimate) in &out.extrinsics {
                    let camera = &rig.cameras[*view];
                    t_worst = t_worst.max(estimate.translation_distance(&camera.extrinsic));
                    r_worst = r_worst.max(estimate.rotation_angle_to(&camera.extrinsic).to_degrees());
                    px_worst = px_worst.max(checkerboard_reprojection_px(camera, estimate));
                }
            }
            Err(e) => failures.push(format!("trial {trial}: {e}")),
        }
    }
    let passed = failures.is_empty() && scale_worst <= 0.01 && t_worst <= 0.005 && r_worst <= 0.5 && px_worst <= 2.0;
    let mut detail = format!(
        "20 trials, worst scale {:.3}%, translation {:.2} mm, rotation {:.3} deg, checkerboard {:.2} px",
        scale_worst * 100.0,
        t_worst * 1000.0,
        r_worst,
        px_worst
    );
    if !failures.is_empty() {
        detail.push_str(&format!("; failed: {}", failures.join(", ")));
    }
    Ok(Outcome::new(passed, detail))
}

// ---------------------------------------------------------------- fusion

fn fuzz_frame(rng: &mut ChaCha8Rng) -> Result<(CalibrationBundle, SyncedFrame), String> {
    let cameras = rng.gen_range(1..=4u8);
    let (w, h) = (rng.gen_range(16..96u32), rng.gen_range(12..72u32));
    let f = rng.gen_range(0.4..1.2) * f64::from(w);
    let models: Vec<CameraModel> = (0..cameras)
        .map(|i| {
            let k = CameraIntrinsics::new(f, f, f64::from(w) / 2.0, f64::from(h) / 2.0, w, h).map_err(err)?;
            let d = DistortionCoefficients::radial(rng.gen_range(-0.2..0.1), rng.gen_range(-0.02..0.02), 0.0);
            let az = 360.0 * f64::from(i) / f64::from(cameras) + rng.gen_range(-20.0..20.0);
            Ok(CameraModel::ring(
                CameraId(i),
                az.rem_euclid(360.0),
                rng.gen_range(0.0..0.2),
                50.0,
                k,
                d,
            ))
        })
        .collect::<Result<_, String>>()?;
    let calib = CalibrationBundle::new(models).map_err(err)?;
    let n = rng.gen_range(0..400);
    let points: Vec<Point3<f64>> = (0..n)
        .map(|_| {
            let az = rng.gen_range(0.0..2.0 * PI);
            let el = rng.gen_range(-0.8..0.8f64);
            let r = rng.gen_range(0.05..12.0);
            Point3::new(r * el.cos() * az.cos(), r * el.cos() * az.sin(), r * el.sin())
        })
        .collect();
    let images: Vec<Image> = (0..cameras)
        .map(|i| Image::from_fn(w, h, |_, _| [rng.gen(), rng.gen(), rng.gen()]).with_meta(0, i))
        .collect();
    let cloud = PointCloud::from_points(points).with_timestamp(0);
    Ok((calib, SyncedFrame::new(cloud, images)))
}

fn criterion_5() -> Result<Outcome, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut mismatches = 0;
    for _ in 0..1000 {
        let (calib, frame) = fuzz_frame(&mut rng)?;
        let a = colourise_frame(&frame, &calib, FusionStrategy::PerPoint).map_err(err)?;
        let b = colourise_frame(&frame, &calib, FusionStrategy::Batched).map_err(err)?;
        if a != b {
            mismatches += 1;
        }
    }

    let rig = SensorRig::default();
    let calib = rig.bundle().map_err(err)?;
    let radius = min_full_coverage_radius(&calib.layout().map_err(err)?)
        .finite()
        .ok_or("unbounded coverage radius")?;
    let (mut beyond, mut coloured) = (0usize, 0usize);
    let (mut uniform, mut matched) = (0usize, 0usize);
    for seed in 0..3 {
        let scene = generate_scene(&SceneSpec::seeded(500 + seed, 5)).map_err(err)?;
        let spec = SequenceSpec {
            frames: 2,
            ..SequenceSpec::default()
        };
        let seq = simulate_sequence(&scene, &rig, &spec).map_err(err)?;
        for (i, scan) in seq.scans.iter().enumerate() {
            let images = seq.images.iter().map(|cam| cam[i].clone());
            let frame = SyncedFrame::new(scan.cloud.clone(), images);
            let out = colourise_frame(&frame, &calib, FusionStrategy::Batched).map_err(err)?;
            for (k, p) in scan.cloud.points.iter().enumerate() {
                if p.xy().coords.norm() <= radius {
                    continue;
                }
                beyond += 1;
                if out.source[k].is_none() {
                    continue;
                }
                coloured += 1;
                let truth = &scan.truth[k];
                if truth.edge_distance >= 0.05 {
                    uniform += 1;
                    if (0..3).all(|c| (i32::from(out.rgb[k][c]) - i32::from(truth.rgb[c])).abs() <= 8) {
                        matched += 1;
                    }
                }
            }
        }
    }
    let fraction = coloured as f64 / beyond.max(1) as f64;
    let truth_rate = matched as f64 / uniform.max(1) as f64;
    Ok(Outcome::new(
        mismatches == 0 && fraction >= 0.99 && truth_rate >= 0.99,
        format!(
            "1000 fuzzed frames, {mismatches} mismatches; coloured {:.3}% of {beyond} points beyond {radius:.3} m; {:.2}% of {uniform} uniform-surface points within 8 of truth",
            fraction * 100.0,
            truth_rate * 100.0
        ),
    ))
}

fn criterion_6() -> Result<Outcome, String> {
    let (calib, frames) = fusion_workload(300_000, 4, 50, 6).map_err(err)?;
    let report = benchmark_fusion(&frames, &calib).map_err(err)?;
    let cores = std::thread::available_parallelism().map_or(1, |n| n.get());
    // The absolute bar is stated for four cores; the batched path scales with
    // cores, so fewer cores get a proportionally lower bar.
    let fps_bar = 10.0 * (cores.min(4) as f64) / 4.0;
    let passed = report.speedup >= 3.0 && report.batched.fps >= fps_bar;
    Ok(Outcome::new(
        passed,
        format!(
            "per-point {:.2} fps, batched {:.2} fps, speedup {:.2}x; {cores} core(s), fps bar {fps_bar:.1}",
            report.per_point.fps, report.batched.fps, report.speedup
        ),
    ))
}

// ---------------------------------------------------------------- low light

fn criterion_7() -> Result<Outcome, String> {
    let tmp = tempfile::tempdir().map_err(err)?;
    let scene = generate_scene(&SceneSpec::seeded(7, 5)).map_err(err)?;
    let rig = SensorRig::default();
    let mut reports = Vec::new();
    for (name, lighting) in [("light", 1.0), ("dark", 0.001)] {
        let root = tmp.path().join(name);
        let spec = SequenceSpec {
            frames: 4,
            lighting,
            sensor: SensorModel::CONSUMER,
            ..SequenceSpec::default()
        };
        write_dataset(root.join("data"), &scene, &rig, &spec).map_err(err)?;
        let config = PipelineConfig::new(
            root.join("data"),
            root.join("out"),
            root.join("data").join(CALIBRATION_FILE),
        );
        let (report, _) = run_pipeline(&config).map_err(err)?;
        reports.push(report);
    }
    let (light, dark) = (&reports[0], &reports[1]);
    let camera_frames = dark.frames.iter().map(|f| f.cameras_paired).sum::<usize>();
    let gate_all = dark.frames_processed == 4
        && camera_frames == 4 * rig.cameras.len()
        && dark.enhancement_activations == camera_frames;
    let min_after = dark.min_brightness_after.unwrap_or(0.0);
    let fraction_gap = light
        .frames
        .iter()
        .zip(&dark.frames)
        .map(|(l, d)| (l.coloured_fraction - d.coloured_fraction).abs())
        .fold(0.0, f64::max);
    let same_frames = light.frames.len() == dark.frames.len() && !light.frames.is_empty();

    let a = Image::from_fn(32, 32, |x, y| {
        [(x * 7 + y * 3) as u8, (x * y) as u8, (255 - x * 5) as u8]
    });
    let identical = psnr(&a, &a).map_err(err)? == PSNR_CAP_DB && (ssim(&a, &a).map_err(err)? - 1.0).abs() < 1e-12;
    let offset_psnr = psnr(&Image::filled(16, 16, [100; 3]), &Image::filled(16, 16, [105; 3])).map_err(err)?;
    let constant_ssim = ssim(&Image::filled(16, 16, [100; 3]), &Image::filled(16, 16, [110; 3])).map_err(err)?;
    let metrics = identical && (offset_psnr - 34.15).abs() < 0.005 && (constant_ssim - 0.99548).abs() < 5e-6;

    let passed = gate_all && min_after >= 0.3 && same_frames && fraction_gap <= 0.005 && metrics;
    Ok(Outcome::new(
        passed,
        format!(
            "gate fired on {}/{camera_frames} dark frames (light run: {}), dark brightness {:.4} -> min {min_after:.3}, coloured fraction gap {:.3} pp; PSNR offset {offset_psnr:.2} dB, SSIM constant {constant_ssim:.5}, identical ok {identical}",
            dark.enhancement_activations,
            light.enhancement_activations,
            dark.mean_brightness_before.unwrap_or(f64::NAN),
            fraction_gap * 100.0
        ),
    ))
}

// ---------------------------------------------------------------- sync

fn criterion_8() -> Result<Outcome, String> {
    let params = SyncParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let sharp = |rng: &mut ChaCha8Rng| Image::from_fn(16, 16, |_, _| [rng.gen(); 3]);
    let blurry = Image::filled(16, 16, [90; 3]);
    let (mut pairs, mut violations, mut nondeterministic) = (0usize, 0usize, 0usize);
    for _ in 0..200 {
        let lidar: Vec<i64> = (0..10)
            .map(|i| i * 100_000_000 + rng.gen_range(-1_000_000..1_000_000))
            .collect();
        let cameras: Vec<Vec<Image>> = (0..3u8)
            .map(|cam| {
                let mut t = rng.gen_range(-50_000_000..0i64);
                let mut frames = Vec::new();
                while t < 1_050_000_000 {
                    let img = if rng.gen_bool(0.3) {
                        blurry.clone()
                    } else {
                        sharp(&mut rng)
                    };
                    frames.push(img.with_meta(t, cam));
                    t += rng.gen_range(5_000_000..40_000_000);
                }
                frames
            })
            .collect();
        let bundles = pair_frames(&lidar, &cameras, &params).map_err(err)?;
        for b in &bundles {
            for (cam, p) in b.cameras.iter().enumerate() {
                let Some(p) = p else { continue };
                pairs += 1;
                let img = &cameras[cam][p.frame_index];
                let delta = img.timestamp_ns - b.lidar_timestamp_ns;
                if delta.abs() >= params.max_delta_ns || laplacian_variance(img).map_err(err)? < params.blur_threshold {
                    violations += 1;
                }
            }
        }
        if pair_frames(&lidar, &cameras, &params).map_err(err)? != bundles {
            nondeterministic += 1;
        }
    }
    let tie_frames = vec![
        sharp(&mut rng).with_meta(995_000_000, 0),
        sharp(&mut rng).with_meta(1_005_000_000, 0),
    ];
    let tie = pair_frames(&[1_000_000_000], &[tie_frames], &params).map_err(err)?;
    let tie_ok = tie[0].cameras[0].map(|p| p.frame_index) == Some(0);
    let constant_zero = laplacian_variance(&Image::filled(40, 30, [123, 45, 67])).map_err(err)? == 0.0;
    Ok(Outcome::new(
        violations == 0 && nondeterministic == 0 && tie_ok && constant_zero && pairs > 0,
        format!("{pairs} pairs over 200 streams, {violations} window/blur violations, repeat runs identical: {}, tie to earlier frame: {tie_ok}, constant variance 0: {constant_zero}", nondeterministic == 0),
    ))
}

fn main() -> ExitCode {
    let only: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let criteria: [(&str, Check, Duration); 8] = [
        ("coverage geometry", criterion_1, Duration::from_secs(1)),
        ("colour calibration", criterion_2, Duration::from_secs(1)),
        ("SfM core", criterion_3, Duration::from_secs(10)),
        ("extrinsic pipeline", criterion_4, Duration::from_secs(120)),
        ("fusion correctness", criterion_5, Duration::from_secs(120)),
        ("fusion performance", criterion_6, Duration::from_secs(300)),
        ("low-light path", criterion_7, Duration::from_secs(120)),
        ("sync and gating", criterion_8, Duration::from_secs(10)),
    ];
    let mut all = true;
    for (i, (name, check, budget)) in criteria.iter().enumerate() {
        let number = i + 1;
        if !only.is_empty() && !only.contains(&number) {
            continue;
        }
        let started = Instant::now();
        let outcome = check().unwrap_or_else(|e| Outcome::new(false, format!("error: {e}")));
        let elapsed = started.elapsed();
        let in_time = elapsed <= *budget;
        let passed = outcome.passed && in_time;
        all &= passed;
        println!(
            "criterion {number} {}: {name}: {} [{:.2} s of {} s{}]",
            if passed { "PASS" } else { "FAIL" },
            outcome.detail,
            elapsed.as_secs_f64(),
            budget.as_secs(),
            if in_time { "" } else { ", over budget" }
        );
    }
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
