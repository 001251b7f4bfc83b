//! Synthetic frames shaped like the fusion workload: a dense LiDAR-like
//! point set and one textured image per camera.

use std::sync::Arc;

use nalgebra::Point3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::sensors::SensorRig;
use crate::calib::CalibrationBundle;
use crate::error::{Error, Result};
use crate::fuse::SyncedFrame;
use crate::geometry::{Image, PointCloud};

/// Ring calibration and `frames` frames of `points` points each. Points lie
/// between 1.5 m and 15 m within ±15° of the horizon; images are coarse
/// random mosaics shared by all frames.
pub fn fusion_workload(
    points: usize,
    cameras: u8,
    frames: usize,
    seed: u64,
) -> Result<(CalibrationBundle, Vec<SyncedFrame>)> {
    if cameras == 0 {
        return Err(Error::invalid("workload needs at least one camera"));
    }
    let calib = SensorRig::ring(cameras).bundle()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let images: Vec<Arc<Image>> = calib
        .cameras
        .iter()
        .map(|c| {
            let (w, h) = (c.intrinsics.width, c.intrinsics.height);
            let tiles: Vec<[u8; 3]> = (0..64 * 64).map(|_| rng.gen()).collect();
            Arc::new(
                Image::from_fn(w, h, |x, y| tiles[((y / 16) % 64 * 64 + (x / 16) % 64) as usize]).with_meta(0, c.id.0),
            )
        })
        .collect();
    let out = (0..frames)
        .map(|f| {
            let t = f as i64 * 100_000_000;
            let cloud = PointCloud::from_points(
                (0..points)
                    .map(|_| {
                        let r = rng.gen_range(1.5..15.0);
                        let az = rng.gen_range(0.0..std::f64::consts::TAU);
                        let el = rng.gen_range(-15f64..15.0).to_radians();
                        Point3::new(r * el.cos() * az.cos(), r * el.cos() * az.sin(), r * el.sin())
                    })
                    .collect(),
            )
            .with_timestamp(t);
            SyncedFrame {
                cloud,
                images: images.clone(),
            }
        })
        .collect();
    Ok((calib, out))
}
