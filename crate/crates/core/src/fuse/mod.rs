//! Colourisation of LiDAR frames from synchronised camera images.
//!
//! Two execution strategies share every scalar formula (transform,
//! projection, bounds test, 3×3 block mean, duplicate resolution) so that
//! their outputs are bit-identical; they differ only in data layout and in
//! how undistorted pixels are obtained.

mod batched;
mod bench;
mod per_point;

use std::str::FromStr;
use std::sync::Arc;

use nalgebra::Point3;
use serde::{Deserialize, Serialize};

use crate::calib::{CalibrationBundle, CameraId, CameraModel};
use crate::error::{Error, Result};
use crate::geometry::{Image, PointCloud};

pub use batched::BatchedFuser;
pub use bench::{benchmark_fusion, BenchReport, StrategyTiming};
pub use per_point::colourise_per_point;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FusionStrategy {
    /// One point at a time through every camera.
    PerPoint,
    /// Whole-array transform, projection and masking per camera.
    Batched,
}

impl FusionStrategy {
    pub const ALL: [FusionStrategy; 2] = [FusionStrategy::PerPoint, FusionStrategy::Batched];

    pub fn name(self) -> &'static str {
        match self {
            FusionStrategy::PerPoint => "per-point",
            FusionStrategy::Batched => "batched",
        }
    }
}

impl FromStr for FusionStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "per-point" | "per_point" | "loop" => Ok(FusionStrategy::PerPoint),
            "batched" | "vectorised" | "vectorized" => Ok(FusionStrategy::Batched),
            other => Err(Error::Configuration(format!("unknown fusion strategy {other:?}"))),
        }
    }
}

/// A LiDAR frame with the camera images paired to it. Images carry their
/// camera id; cameras without an image are simply absent. Images are shared
/// so that frames can reuse them cheaply.
#[derive(Debug, Clone, Default)]
pub struct SyncedFrame {
    pub cloud: PointCloud,
    pub images: Vec<Arc<Image>>,
}

impl SyncedFrame {
    pub fn new(cloud: PointCloud, images: impl IntoIterator<Item = Image>) -> Self {
        Self {
            cloud,
            images: images.into_iter().map(Arc::new).collect(),
        }
    }
}

/// Fused output; index `i` always describes input point `i`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ColourisedCloud {
    pub points: Vec<Point3<f64>>,
    pub rgb: Vec<[u8; 3]>,
    pub source: Vec<Option<CameraId>>,
    pub timestamp_ns: i64,
}

impl ColourisedCloud {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn coloured_count(&self) -> usize {
        self.source.iter().filter(|s| s.is_some()).count()
    }

    /// Camera ids as stored on disk, 255 for none.
    pub fn camera_bytes(&self) -> Vec<u8> {
        self.source.iter().map(|s| s.map_or(CameraId::NONE, |c| c.0)).collect()
    }
}

/// Percentage of points that received a camera colour.
pub fn coloured_fraction(cloud: &ColourisedCloud) -> Result<f64> {
    if cloud.is_empty() {
        return Err(Error::invalid("coloured fraction of an empty cloud"));
    }
    Ok(100.0 * cloud.coloured_count() as f64 / cloud.len() as f64)
}

/// Integer pixel at the rounded projection, or `None` outside the frame.
#[inline(always)]
pub(crate) fn pixel_centre(u: f64, v: f64, width: u32, height: u32) -> Option<(u32, u32)> {
    if u >= 0.0 && u < width as f64 && v >= 0.0 && v < height as f64 {
        let cx = ((u + 0.5).floor() as u32).min(width - 1);
        let cy = ((v + 0.5).floor() as u32).min(height - 1);
        Some((cx, cy))
    } else {
        None
    }
}

/// Mean of the 3×3 block around `(cx, cy)` with replicated borders, rounded
/// half up.
#[inline(always)]
pub(crate) fn block_mean(
    cx: u32,
    cy: u32,
    width: u32,
    height: u32,
    mut get: impl FnMut(u32, u32) -> [u8; 3],
) -> [u8; 3] {
    let mut sum = [0u32; 3];
    for dy in [-1i64, 0, 1] {
        let y = (cy as i64 + dy).clamp(0, height as i64 - 1) as u32;
        for dx in [-1i64, 0, 1] {
            let x = (cx as i64 + dx).clamp(0, width as i64 - 1) as u32;
            let px = get(x, y);
            sum[0] += px[0] as u32;
            sum[1] += px[1] as u32;
            sum[2] += px[2] as u32;
        }
    }
    sum.map(|s| ((s + 4) / 9) as u8)
}

/// Colour of the 3×3 block centred on the rounded pixel `(u, v)`; `None`
/// when the projection falls outside the image.
pub fn sample_colour_3x3(img: &Image, u: f64, v: f64) -> Option<[u8; 3]> {
    let (cx, cy) = pixel_centre(u, v, img.width, img.height)?;
    Some(block_mean(cx, cy, img.width, img.height, |x, y| img.get(x, y)))
}

/// One camera's view of one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate {
    pub camera: CameraId,
    pub u: f64,
    pub v: f64,
    pub rgb: [u8; 3],
}

/// Squared pixel distance from the camera's principal point.
#[inline(always)]
pub(crate) fn centre_distance2(cam: &CameraModel, u: f64, v: f64) -> f64 {
    let du = u - cam.intrinsics.cx;
    let dv = v - cam.intrinsics.cy;
    du * du + dv * dv
}

/// Keeps the candidate nearest its camera's principal point; ties go to the
/// lowest camera id.
pub fn resolve_duplicates(candidates: &[Candidate], calib: &CalibrationBundle) -> Result<Option<(CameraId, [u8; 3])>> {
    let mut best: Option<(f64, CameraId, [u8; 3])> = None;
    for c in candidates {
        let cam = calib
            .camera(c.camera)
            .ok_or_else(|| Error::Configuration(format!("{} not in calibration bundle", c.camera)))?;
        let d = centre_distance2(cam, c.u, c.v);
        let wins = match best {
            None => true,
            Some((bd, bid, _)) => d < bd || (d == bd && c.camera < bid),
        };
        if wins {
            best = Some((d, c.camera, c.rgb));
        }
    }
    Ok(best.map(|(_, id, rgb)| (id, rgb)))
}

/// Cameras taking part in a frame, ascending by id, paired with their image.
pub(crate) fn frame_cameras<'a>(
    frame: &'a SyncedFrame,
    calib: &'a CalibrationBundle,
) -> Result<Vec<(&'a CameraModel, &'a Image)>> {
    let mut out = Vec::with_capacity(frame.images.len());
    for img in &frame.images {
        let id = CameraId(img.camera_id);
        let cam = calib
            .camera(id)
            .ok_or_else(|| Error::Configuration(format!("frame image from {id} missing from calibration bundle")))?;
        if img.width != cam.intrinsics.width || img.height != cam.intrinsics.height {
            return Err(Error::invalid(format!(
                "{id} image is {}x{}, calibration expects {}x{}",
                img.width, img.height, cam.intrinsics.width, cam.intrinsics.height
            )));
        }
        if out.iter().any(|(c, _): &(&CameraModel, &Image)| c.id == id) {
            return Err(Error::invalid(format!("two images from {id} in one frame")));
        }
        out.push((cam, img.as_ref()));
    }
    out.sort_by_key(|(c, _)| c.id);
    Ok(out)
}

/// Fuses one frame with the chosen strategy.
pub fn colourise_frame(
    frame: &SyncedFrame,
    calib: &CalibrationBundle,
    strategy: FusionStrategy,
) -> Result<ColourisedCloud> {
    match strategy {
        FusionStrategy::PerPoint => colourise_per_point(frame, calib),
        FusionStrategy::Batched => BatchedFuser::new(calib).fuse(frame),
    }
}
