//! Simulated recordings, in memory or written in the dataset layout.

use std::path::{Path, PathBuf};

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::scene::Scene;
use super::sensors::{expose, render_radiance, simulate_lidar, LidarScan, SensorModel, SensorRig};
use crate::error::{Error, Result};
use crate::geometry::{Image, PointCloud, RigidTransform};
use crate::io::{self, DatasetIndex, ImageFormat};

pub const CALIBRATION_FILE: &str = "calibration.json";
pub const SCENE_FILE: &str = "scene.json";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SequenceSpec {
    pub frames: usize,
    pub start_ns: i64,
    /// Height of the LiDAR above the floor; the rig stays level and still.
    pub rig_height: f64,
    pub lighting: f64,
    pub sensor: SensorModel,
    /// Largest camera-to-LiDAR trigger offset.
    pub max_jitter_ns: i64,
    pub image_format: ImageFormat,
}

impl Default for SequenceSpec {
    fn default() -> Self {
        Self {
            frames: 5,
            start_ns: 1_000_000_000,
            rig_height: 1.0,
            lighting: 1.0,
            sensor: SensorModel::Ideal,
            max_jitter_ns: 8_000_000,
            image_format: ImageFormat::Ppm,
        }
    }
}

impl SequenceSpec {
    pub fn rig_pose(&self) -> RigidTransform {
        RigidTransform::from_translation(Vector3::new(0.0, 0.0, self.rig_height))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sequence {
    pub scans: Vec<LidarScan>,
    /// `images[k]` holds camera `k`'s frames in time order.
    pub images: Vec<Vec<Image>>,
}

/// Renders a recording of a still rig. Each camera's radiance is traced
/// once; frames differ by timestamp, trigger offset and sensor noise.
pub fn simulate_sequence(scene: &Scene, rig: &SensorRig, spec: &SequenceSpec) -> Result<Sequence> {
    if spec.frames == 0 {
        return Ok(Sequence {
            scans: Vec::new(),
            images: vec![Vec::new(); rig.cameras.len()],
        });
    }
    let pose = spec.rig_pose();
    let period = rig.lidar.frame_period_ns();
    if spec.max_jitter_ns < 0 || spec.max_jitter_ns * 2 >= period {
        return Err(Error::invalid(
            "camera jitter must be non-negative and below half the LiDAR period",
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(scene.spec.seed ^ 0x5e9);
    let stamps: Vec<i64> = (0..spec.frames).map(|i| spec.start_ns + i as i64 * period).collect();
    let scans = stamps
        .iter()
        .map(|&t| simulate_lidar(scene, &rig.lidar, &pose, t))
        .collect::<Result<Vec<_>>>()?;
    let mut images = Vec::with_capacity(rig.cameras.len());
    for cam in &rig.cameras {
        let radiance = render_radiance(scene, cam, &pose);
        let mut frames = Vec::with_capacity(stamps.len());
        for &t in &stamps {
            let jitter = if spec.max_jitter_ns > 0 {
                rng.gen_range(-spec.max_jitter_ns..=spec.max_jitter_ns)
            } else {
                0
            };
            frames.push(expose(
                &radiance,
                cam,
                t + jitter,
                spec.lighting,
                &spec.sensor,
                scene.spec.seed,
            )?);
        }
        images.push(frames);
    }
    Ok(Sequence { scans, images })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub root: PathBuf,
    pub frames: usize,
    pub lidar_points: usize,
    pub camera_frames: usize,
}

/// Writes `lidar/`, `truth/`, `cam<k>/`, the ground-truth calibration bundle
/// and the scene description under `root`.
pub fn write_dataset(
    root: impl AsRef<Path>,
    scene: &Scene,
    rig: &SensorRig,
    spec: &SequenceSpec,
) -> Result<DatasetSummary> {
    let root = root.as_ref();
    std::fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
    let seq = simulate_sequence(scene, rig, spec)?;
    let mut lidar_points = 0;
    for scan in &seq.scans {
        let t = scan.cloud.timestamp_ns;
        io::save_cloud(DatasetIndex::lidar_path(root, t), &scan.cloud)?;
        let mut truth = PointCloud::from_points(scan.cloud.points.clone()).with_timestamp(t);
        truth.colors = Some(scan.truth.iter().map(|s| s.rgb).collect());
        io::save_cloud(DatasetIndex::truth_path(root, t), &truth)?;
        lidar_points += scan.cloud.len();
    }
    let mut camera_frames = 0;
    for frames in &seq.images {
        for img in frames {
            let path = DatasetIndex::camera_path(root, img.camera_id, img.timestamp_ns, spec.image_format.extension());
            io::save_image(path, img)?;
            camera_frames += 1;
        }
    }
    rig.bundle()?.save(root.join(CALIBRATION_FILE))?;
    io::save_json(root.join(SCENE_FILE), &scene.spec)?;
    Ok(DatasetSummary {
        root: root.to_path_buf(),
        frames: seq.scans.len(),
        lidar_points,
        camera_frames,
    })
}
