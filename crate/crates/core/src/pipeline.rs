//! End-to-end processing of a recorded dataset: synchronise, colour-correct,
//! gate and enhance, smooth, fuse, and write one coloured cloud per frame.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::calib::{CalibrationBundle, CameraId};
use crate::colorcal::apply_correction;
use crate::enhance::{
    should_enhance, BuiltinEnhancer, Enhancer, TemporalSmoother, DEFAULT_BRIGHTNESS_THRESHOLD,
    DEFAULT_TARGET_BRIGHTNESS,
};
use crate::error::{Error, Result};
use crate::framesync::{is_blurry, mean_brightness, pair_timestamps, SyncParams};
use crate::fuse::{coloured_fraction, colourise_frame, BatchedFuser, FusionStrategy, SyncedFrame};
use crate::geometry::Image;
use crate::io::{self, DatasetIndex};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub input: PathBuf,
    pub output: PathBuf,
    pub calibration: PathBuf,
    #[serde(default)]
    pub sync: SyncParams,
    #[serde(default = "default_threshold")]
    pub brightness_threshold: f64,
    #[serde(default = "default_target")]
    pub target_brightness: f64,
    /// Frames of memory for the brightness smoother.
    #[serde(default = "default_window")]
    pub smoothing_window: u32,
    #[serde(default = "default_strategy")]
    pub strategy: FusionStrategy,
    /// LiDAR timestamps to process; every frame when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frames: Option<Vec<i64>>,
}

fn default_threshold() -> f64 {
    DEFAULT_BRIGHTNESS_THRESHOLD
}
fn default_target() -> f64 {
    DEFAULT_TARGET_BRIGHTNESS
}
fn default_window() -> u32 {
    4
}
fn default_strategy() -> FusionStrategy {
    FusionStrategy::Batched
}

impl PipelineConfig {
    pub fn new(input: impl Into<PathBuf>, output: impl Into<PathBuf>, calibration: impl Into<PathBuf>) -> Self {
        Self {
            input: input.into(),
            output: output.into(),
            calibration: calibration.into(),
            sync: SyncParams::default(),
            brightness_threshold: default_threshold(),
            target_brightness: default_target(),
            smoothing_window: default_window(),
            strategy: default_strategy(),
            frames: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameReport {
    pub timestamp_ns: i64,
    pub points: usize,
    pub cameras_paired: usize,
    pub enhanced: usize,
    pub coloured_fraction: f64,
    pub output: PathBuf,
}

/// Deterministic summary of a run; timings are kept apart in [`StageTimings`]
/// so that repeated runs produce identical reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct RunReport {
    pub lidar_frames: usize,
    pub frames_processed: usize,
    pub frames_skipped: usize,
    /// Camera frames rejected by the blur gate.
    pub blurry_rejected: usize,
    /// Camera slots left empty after synchronisation.
    pub unpaired_slots: usize,
    pub unreadable_images: usize,
    pub enhancement_activations: usize,
    pub mean_brightness_before: Option<f64>,
    pub mean_brightness_after: Option<f64>,
    /// Darkest camera frame after correction and enhancement.
    pub min_brightness_after: Option<f64>,
    pub mean_coloured_fraction: Option<f64>,
    pub frames: Vec<FrameReport>,
}

/// Wall-clock seconds per stage, summed over frames.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct StageTimings {
    pub sync: f64,
    pub load: f64,
    pub correct: f64,
    pub enhance: f64,
    pub fuse: f64,
    pub write: f64,
}

struct Mean {
    sum: f64,
    n: usize,
}

impl Mean {
    fn new() -> Self {
        Self { sum: 0.0, n: 0 }
    }
    fn push(&mut self, v: f64) {
        self.sum += v;
        self.n += 1;
    }
    fn get(&self) -> Option<f64> {
        (self.n > 0).then(|| self.sum / self.n as f64)
    }
}

pub fn run_pipeline(config: &PipelineConfig) -> Result<(RunReport, StageTimings)> {
    let enhancer = BuiltinEnhancer::new(config.target_brightness)?;
    run_pipeline_with(config, &enhancer)
}

/// Output path of the coloured cloud for a LiDAR timestamp.
pub fn output_path(dir: &Path, timestamp_ns: i64) -> PathBuf {
    dir.join(format!("{timestamp_ns}.ply"))
}

pub fn run_pipeline_with(config: &PipelineConfig, enhancer: &dyn Enhancer) -> Result<(RunReport, StageTimings)> {
    if !config.calibration.is_file() {
        return Err(Error::Configuration(format!(
            "calibration bundle {} not found",
            config.calibration.display()
        )));
    }
    let calib = CalibrationBundle::load(&config.calibration)?;
    if !(config.brightness_threshold > 0.0 && config.brightness_threshold < 1.0) {
        return Err(Error::Configuration("brightness threshold outside (0, 1)".into()));
    }
    let mut index = DatasetIndex::scan(&config.input)?;
    if let Some(wanted) = &config.frames {
        let known: std::collections::BTreeSet<i64> = index.lidar_timestamps().into_iter().collect();
        if let Some(missing) = wanted.iter().find(|t| !known.contains(t)) {
            return Err(Error::invalid(format!(
                "no LiDAR frame {missing} in {}",
                config.input.display()
            )));
        }
        index.lidar.retain(|l| wanted.contains(&l.timestamp_ns));
    }
    for id in index.camera_ids() {
        if calib.camera(CameraId(id)).is_none() {
            return Err(Error::Configuration(format!(
                "dataset camera {id} missing from calibration bundle"
            )));
        }
    }
    std::fs::create_dir_all(&config.output).map_err(|e| Error::io(&config.output, e))?;
    let mut timings = StageTimings::default();
    let mut report = RunReport {
        lidar_frames: index.lidar.len(),
        ..RunReport::default()
    };

    // Synchronise, reading each candidate image at most once.
    let started = Instant::now();
    let cameras: Vec<u8> = index.camera_ids();
    let stamps: Vec<Vec<i64>> = cameras.iter().map(|&id| index.camera_timestamps(id)).collect();
    let mut cache: HashMap<(usize, usize), Image> = HashMap::new();
    let mut unreadable = 0usize;
    let mut blurry = 0usize;
    let bundles = pair_timestamps(&index.lidar_timestamps(), &stamps, &config.sync, |k, i| {
        let entry = &index.cameras[&cameras[k]][i];
        match io::load_image(&entry.path) {
            Ok(img) => {
                let img = img.with_meta(entry.timestamp_ns, cameras[k]);
                let sharp = !is_blurry(&img, config.sync.blur_threshold)?;
                if sharp {
                    cache.insert((k, i), img);
                } else {
                    blurry += 1;
                }
                Ok(sharp)
            }
            Err(e) => {
                log::warn!("skipping unreadable image: {e}");
                unreadable += 1;
                Ok(false)
            }
        }
    })?;
    report.blurry_rejected = blurry;
    report.unreadable_images = unreadable;
    timings.sync += started.elapsed().as_secs_f64();

    let mut smoother = TemporalSmoother::new(config.smoothing_window)?;
    let fuser = BatchedFuser::new(&calib);
    let (mut before, mut after, mut fraction) = (Mean::new(), Mean::new(), Mean::new());
    for bundle in &bundles {
        let started = Instant::now();
        let lidar = &index.lidar[bundle.lidar_index];
        let cloud = match io::load_cloud(&lidar.path) {
            Ok(c) => c.with_timestamp(lidar.timestamp_ns),
            Err(e) => {
                log::warn!("skipping frame {}: {e}", lidar.timestamp_ns);
                report.frames_skipped += 1;
                continue;
            }
        };
        timings.load += started.elapsed().as_secs_f64();

        let mut images = Vec::new();
        let mut enhanced = 0usize;
        for (k, paired) in bundle.cameras.iter().enumerate() {
            let Some(paired) = paired else {
                report.unpaired_slots += 1;
                continue;
            };
            let raw = cache
                .get(&(k, paired.frame_index))
                .expect("paired frames were read during sync");
            let model = calib.camera(CameraId(cameras[k])).expect("checked above");

            let started = Instant::now();
            let corrected = apply_correction(raw, &model.color);
            timings.correct += started.elapsed().as_secs_f64();

            let started = Instant::now();
            let brightness = mean_brightness(&corrected);
            before.push(brightness);
            let image = if should_enhance(&corrected, config.brightness_threshold) {
                enhanced += 1;
                let out = enhancer.enhance(&corrected)?;
                if out.image.width != corrected.width || out.image.height != corrected.height {
                    return Err(Error::Configuration(format!(
                        "enhancer {} changed the frame size",
                        enhancer.name()
                    )));
                }
                smoother.smooth(&out.image)?
            } else {
                corrected
            };
            let lifted = mean_brightness(&image);
            after.push(lifted);
            report.min_brightness_after = Some(report.min_brightness_after.map_or(lifted, |m: f64| m.min(lifted)));
            timings.enhance += started.elapsed().as_secs_f64();
            images.push(image);
        }
        report.enhancement_activations += enhanced;

        let started = Instant::now();
        let frame = SyncedFrame::new(cloud, images);
        let fused = match config.strategy {
            FusionStrategy::Batched => fuser.fuse(&frame)?,
            other => colourise_frame(&frame, &calib, other)?,
        };
        timings.fuse += started.elapsed().as_secs_f64();

        let started = Instant::now();
        let path = output_path(&config.output, lidar.timestamp_ns);
        io::save_colourised(&path, &fused)?;
        timings.write += started.elapsed().as_secs_f64();

        let frac = if fused.is_empty() {
            0.0
        } else {
            coloured_fraction(&fused)?
        };
        fraction.push(frac);
        report.frames.push(FrameReport {
            timestamp_ns: lidar.timestamp_ns,
            points: fused.len(),
            cameras_paired: frame.images.len(),
            enhanced,
            coloured_fraction: frac,
            output: path,
        });
        report.frames_processed += 1;
    }
    report.mean_brightness_before = before.get();
    report.mean_brightness_after = after.get();
    report.mean_coloured_fraction = fraction.get();
    Ok((report, timings))
}
