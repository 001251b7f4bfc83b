//! LiDAR and camera models driven by the ray caster.

use nalgebra::{Point3, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::scene::Scene;
use crate::calib::{CalibrationBundle, CameraId, CameraModel};
use crate::error::{Error, Result};
use crate::geometry::{CameraIntrinsics, DistortionCoefficients, Image, PointCloud, RigidTransform};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LidarSpec {
    pub channels: u32,
    pub vertical_fov_deg: f64,
    pub azimuth_step_deg: f64,
    pub max_range: f64,
    pub spin_rate_hz: f64,
    /// Gaussian range noise, metres.
    pub range_noise: f64,
}

impl Default for LidarSpec {
    fn default() -> Self {
        Self {
            channels: 16,
            vertical_fov_deg: 20.0,
            azimuth_step_deg: 0.2,
            max_range: 100.0,
            spin_rate_hz: 10.0,
            range_noise: 0.0,
        }
    }
}

impl LidarSpec {
    pub fn validate(&self) -> Result<()> {
        if self.channels == 0 {
            return Err(Error::invalid("LiDAR needs at least one channel"));
        }
        if !(self.vertical_fov_deg >= 0.0 && self.vertical_fov_deg < 180.0) {
            return Err(Error::invalid("vertical FOV outside [0, 180)"));
        }
        if !(self.azimuth_step_deg > 0.0 && self.azimuth_step_deg <= 360.0) {
            return Err(Error::invalid("azimuth step outside (0, 360]"));
        }
        if !(self.max_range > 0.0 && self.spin_rate_hz > 0.0 && self.range_noise >= 0.0) {
            return Err(Error::invalid("LiDAR range, spin rate and noise must be positive"));
        }
        Ok(())
    }

    pub fn elevations_deg(&self) -> Vec<f64> {
        if self.channels == 1 {
            return vec![0.0];
        }
        let n = self.channels as f64 - 1.0;
        (0..self.channels)
            .map(|i| -self.vertical_fov_deg / 2.0 + self.vertical_fov_deg * i as f64 / n)
            .collect()
    }

    pub fn azimuth_steps(&self) -> usize {
        (360.0 / self.azimuth_step_deg).round().max(1.0) as usize
    }

    pub fn frame_period_ns(&self) -> i64 {
        (1e9 / self.spin_rate_hz).round() as i64
    }
}

/// A spinning LiDAR with a ring of cameras whose extrinsics are the ground
/// truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorRig {
    pub lidar: LidarSpec,
    pub cameras: Vec<CameraModel>,
}

impl SensorRig {
    /// Four 1280×720 cameras facing 0/90/180/270°, 0.1 m out from the LiDAR.
    pub fn ring(count: u8) -> Self {
        let k = CameraIntrinsics::new(500.0, 500.0, 640.0, 360.0, 1280, 720).expect("valid intrinsics");
        let d = DistortionCoefficients::radial(-0.05, 0.0, 0.0);
        let cameras = (0..count)
            .map(|i| {
                let az = 360.0 * f64::from(i) / f64::from(count);
                CameraModel::ring(CameraId(i), az, 0.1, 50.0, k, d)
            })
            .collect();
        Self {
            lidar: LidarSpec::default(),
            cameras,
        }
    }

    pub fn bundle(&self) -> Result<CalibrationBundle> {
        CalibrationBundle::new(self.cameras.clone())
    }
}

impl Default for SensorRig {
    fn default() -> Self {
        Self::ring(4)
    }
}

/// Ground truth for one simulated return.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfaceTruth {
    pub rgb: [u8; 3],
    pub edge_distance: f64,
    pub surface: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LidarScan {
    /// Points in the LiDAR frame.
    pub cloud: PointCloud,
    pub truth: Vec<SurfaceTruth>,
}

fn stream_seed(scene_seed: u64, salt: u64, t_ns: i64) -> u64 {
    scene_seed
        .wrapping_mul(0x9e37_79b9_7f4a_7c15)
        .wrapping_add(salt.rotate_left(17))
        .wrapping_add(t_ns as u64)
}

/// One revolution from `pose` (LiDAR → world). Returns are ordered by
/// azimuth step, then channel.
pub fn simulate_lidar(scene: &Scene, lidar: &LidarSpec, pose: &RigidTransform, t_ns: i64) -> Result<LidarScan> {
    lidar.validate()?;
    let origin = pose.apply(&Point3::origin());
    let elevations: Vec<(f64, f64)> = lidar
        .elevations_deg()
        .iter()
        .map(|e| e.to_radians().sin_cos())
        .collect();
    let steps = lidar.azimuth_steps();
    let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(scene.spec.seed, 1, t_ns));
    let noise = Normal::new(0.0, lidar.range_noise).map_err(|e| Error::invalid(e.to_string()))?;
    let mut scan = LidarScan::default();
    for step in 0..steps {
        let (sa, ca) = (360.0 * step as f64 / steps as f64).to_radians().sin_cos();
        for &(se, ce) in &elevations {
            let local = Vector3::new(ce * ca, ce * sa, se);
            let Some(hit) = scene.cast(&origin, &pose.rotate(&local)) else {
                continue;
            };
            if hit.distance > lidar.max_range {
                continue;
            }
            let range = if lidar.range_noise > 0.0 {
                hit.distance + noise.sample(&mut rng)
            } else {
                hit.distance
            };
            scan.cloud.points.push(Point3::from(local * range));
            scan.truth.push(SurfaceTruth {
                rgb: hit.rgb,
                edge_distance: hit.edge_distance,
                surface: hit.surface,
            });
        }
    }
    scan.cloud.timestamp_ns = t_ns;
    Ok(scan)
}

/// How scene radiance becomes pixel values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SensorModel {
    /// Radiance times lighting, rounded.
    Ideal,
    /// Photon shot noise and read noise at an automatic gain that tries to
    /// restore full exposure, capped at `max_gain`.
    Noisy {
        full_well_e: f64,
        read_noise_e: f64,
        max_gain: f64,
    },
}

impl SensorModel {
    pub const CONSUMER: SensorModel = SensorModel::Noisy {
        full_well_e: 4000.0,
        read_noise_e: 2.0,
        max_gain: 64.0,
    };

    pub fn gain(&self, lighting: f64) -> f64 {
        match *self {
            SensorModel::Ideal => 1.0,
            SensorModel::Noisy { max_gain, .. } => (1.0 / lighting).clamp(1.0, max_gain),
        }
    }
}

pub const BACKGROUND: [u8; 3] = [0, 0, 0];

/// Renders the view of `camera` with the rig at `pose` (LiDAR → world).
/// Integer pixel coordinates are pixel centres; each pixel casts one ray
/// through the lens model.
pub fn simulate_camera(
    scene: &Scene,
    camera: &CameraModel,
    pose: &RigidTransform,
    t_ns: i64,
    lighting: f64,
    sensor: &SensorModel,
) -> Result<Image> {
    if !(lighting > 0.0 && lighting <= 1.0) {
        return Err(Error::invalid(format!("lighting {lighting} outside (0, 1]")));
    }
    let radiance = render_radiance(scene, camera, pose);
    expose(&radiance, camera, t_ns, lighting, sensor, scene.spec.seed)
}

/// Surface colour seen through every pixel, before lighting and sensor.
pub fn render_radiance(scene: &Scene, camera: &CameraModel, pose: &RigidTransform) -> Image {
    let k = &camera.intrinsics;
    let d = &camera.distortion;
    let cam_to_world = pose.compose(&camera.extrinsic.inverse());
    let origin = cam_to_world.apply(&Point3::origin());
    let (w, h) = (k.width, k.height);
    let mut pixels = vec![0u8; w as usize * h as usize * 3];
    pixels.par_chunks_mut(w as usize * 3).enumerate().for_each(|(y, row)| {
        for x in 0..w as usize {
            let (xd, yd) = k.to_normalized(x as f64, y as f64);
            let (xn, yn) = d.undistort(xd, yd);
            let dir = cam_to_world.rotate(&Vector3::new(xn, yn, 1.0));
            let rgb = scene.cast(&origin, &dir).map_or(BACKGROUND, |hit| hit.rgb);
            row[3 * x..3 * x + 3].copy_from_slice(&rgb);
        }
    });
    Image::new(w, h, pixels).expect("buffer sized for frame")
}

/// Applies lighting and the sensor model to a radiance image.
pub fn expose(
    radiance: &Image,
    camera: &CameraModel,
    t_ns: i64,
    lighting: f64,
    sensor: &SensorModel,
    seed: u64,
) -> Result<Image> {
    let pixels = match *sensor {
        SensorModel::Ideal => radiance
            .pixels
            .iter()
            .map(|&v| (f64::from(v) * lighting).round().clamp(0.0, 255.0) as u8)
            .collect(),
        SensorModel::Noisy {
            full_well_e,
            read_noise_e,
            ..
        } => {
            if !(full_well_e > 0.0 && read_noise_e >= 0.0) {
                return Err(Error::invalid("sensor full well and read noise must be positive"));
            }
            let gain = sensor.gain(lighting);
            let to_dn = gain * 255.0 / full_well_e;
            let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(seed, 2 + u64::from(camera.id.0), t_ns));
            let unit = Normal::new(0.0, 1.0).expect("unit normal");
            radiance
                .pixels
                .iter()
                .map(|&v| {
                    let electrons = f64::from(v) / 255.0 * lighting * full_well_e;
                    let sigma = (electrons + read_noise_e * read_noise_e).sqrt();
                    let measured = (electrons + sigma * unit.sample(&mut rng)).max(0.0);
                    (measured * to_dn).round().clamp(0.0, 255.0) as u8
                })
                .collect()
        }
    };
    Ok(Image::new(radiance.width, radiance.height, pixels)?.with_meta(t_ns, camera.id.0))
}
