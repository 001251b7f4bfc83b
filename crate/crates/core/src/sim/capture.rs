//! Synthetic inputs for targetless extrinsic calibration: a dense static
//! LiDAR scan and an up-to-scale reconstruction seen through the cameras.

use nalgebra::{Point3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, UnitSphere};
use serde::{Deserialize, Serialize};

use super::scene::Scene;
use super::sensors::SensorRig;
use crate::calib::CameraModel;
use crate::error::{Error, Result};
use crate::geometry::{PointCloud, RigidTransform};
use crate::sfm::CameraPose;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaptureParams {
    /// Rays of the static scan, uniform over the sphere.
    pub lidar_rays: usize,
    /// Random pixel rays per camera for the reconstruction.
    pub rays_per_camera: usize,
    /// Reconstruction units per metre.
    pub scale: f64,
    /// Rigid placement of the reconstruction frame.
    pub offset: RigidTransform,
    /// Fraction of reconstructed points kept.
    pub keep_fraction: f64,
    /// Isotropic point noise in metres, applied before scaling.
    pub noise: f64,
    pub seed: u64,
}

impl Default for CaptureParams {
    fn default() -> Self {
        Self {
            lidar_rays: 120_000,
            rays_per_camera: 40_000,
            scale: 1.0,
            offset: RigidTransform::identity(),
            keep_fraction: 0.5,
            noise: 0.005,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationCapture {
    /// LiDAR-frame scan.
    pub lidar: PointCloud,
    /// Reconstruction in its own frame and units.
    pub sfm: PointCloud,
    /// World-to-camera poses in the reconstruction frame, one per camera.
    pub poses: Vec<CameraPose>,
}

/// Scan and reconstruction of `scene` with the rig at `pose`.
pub fn simulate_capture(
    scene: &Scene,
    rig: &SensorRig,
    pose: &RigidTransform,
    params: &CaptureParams,
) -> Result<CalibrationCapture> {
    if !(params.scale > 0.0 && params.scale.is_finite()) {
        return Err(Error::invalid("reconstruction scale must be positive"));
    }
    if !(params.keep_fraction > 0.0 && params.keep_fraction <= 1.0) || params.noise < 0.0 {
        return Err(Error::invalid("keep fraction outside (0, 1] or negative noise"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let world_to_lidar = pose.inverse();
    let origin = pose.apply(&Point3::origin());

    let mut lidar = Vec::with_capacity(params.lidar_rays);
    for _ in 0..params.lidar_rays {
        let dir: [f64; 3] = UnitSphere.sample(&mut rng);
        if let Some(hit) = scene.cast(&origin, &Vector3::from(dir)) {
            lidar.push(world_to_lidar.apply(&hit.point));
        }
    }

    let noise = Normal::new(0.0, params.noise).map_err(|e| Error::invalid(e.to_string()))?;
    let mut sfm = Vec::new();
    for cam in &rig.cameras {
        let k = &cam.intrinsics;
        let cam_to_world = pose.compose(&cam.extrinsic.inverse());
        let centre = cam_to_world.apply(&Point3::origin());
        for _ in 0..params.rays_per_camera {
            let (u, v) = (rng.gen_range(0.0..k.width as f64), rng.gen_range(0.0..k.height as f64));
            let (xd, yd) = k.to_normalized(u, v);
            let (xn, yn) = cam.distortion.undistort(xd, yd);
            let Some(hit) = scene.cast(&centre, &cam_to_world.rotate(&Vector3::new(xn, yn, 1.0))) else {
                continue;
            };
            if !rng.gen_bool(params.keep_fraction) {
                continue;
            }
            let jitter = Vector3::from_fn(|_, _| noise.sample(&mut rng));
            let metric = world_to_lidar.apply(&hit.point) + jitter;
            sfm.push(params.offset.apply(&Point3::from(metric.coords * params.scale)));
        }
    }

    let offset_rot_t = params.offset.rotation().transpose();
    let poses = rig
        .cameras
        .iter()
        .enumerate()
        .map(|(i, cam)| {
            let r = cam.extrinsic.rotation() * offset_rot_t;
            let t = cam.extrinsic.translation() * params.scale - r * params.offset.translation();
            CameraPose::new(i, RigidTransform::from_approx(&r, t))
        })
        .collect();
    Ok(CalibrationCapture {
        lidar: PointCloud::from_points(lidar),
        sfm: PointCloud::from_points(sfm),
        poses,
    })
}

/// Pixel position of a LiDAR-frame point through `extrinsic` and the
/// camera's lens.
pub fn project_with(camera: &CameraModel, extrinsic: &RigidTransform, p: &Point3<f64>) -> Option<(f64, f64)> {
    let q = extrinsic.apply(p);
    if q.z <= 0.0 {
        return None;
    }
    let (xd, yd) = camera.distortion.distort(q.x / q.z, q.y / q.z);
    Some(camera.intrinsics.to_pixel(xd, yd))
}

/// RMS pixel discrepancy over the inner corners of a 9×7 board with 0.1 m
/// squares held 2 m in front of the camera, projected through the true and
/// the estimated extrinsic.
pub fn checkerboard_reprojection_px(camera: &CameraModel, estimated: &RigidTransform) -> f64 {
    let to_lidar = camera.extrinsic.inverse();
    let mut sum = 0.0;
    let mut n = 0usize;
    for row in 0..6 {
        for col in 0..8 {
            let local = Point3::new((col as f64 - 3.5) * 0.1, (row as f64 - 2.5) * 0.1, 2.0);
            let p = to_lidar.apply(&local);
            let (Some(a), Some(b)) = (
                project_with(camera, &camera.extrinsic, &p),
                project_with(camera, estimated, &p),
            ) else {
                return f64::INFINITY;
            };
            sum += (a.0 - b.0).powi(2) + (a.1 - b.1).powi(2);
            n += 1;
        }
    }
    (sum / n as f64).sqrt()
}
