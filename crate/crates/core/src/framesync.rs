//! Sharpness gating, brightness measurement and LiDAR/camera frame pairing.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Image;

pub const DEFAULT_BLUR_THRESHOLD: f64 = 150.0;
pub const DEFAULT_MAX_DELTA_NS: i64 = 16_000_000;

/// Population variance of the 4-neighbour Laplacian of luma, replicate border.
pub fn laplacian_variance(img: &Image) -> Result<f64> {
    if img.width < 3 || img.height < 3 {
        return Err(Error::invalid(format!(
            "Laplacian needs at least 3x3 pixels, got {}x{}",
            img.width, img.height
        )));
    }
    let (w, h) = (img.width as usize, img.height as usize);
    let luma = img.luma();
    let at = |x: usize, y: usize| luma[y * w + x];
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for y in 0..h {
        let (up, down) = (y.saturating_sub(1), (y + 1).min(h - 1));
        for x in 0..w {
            let (left, right) = (x.saturating_sub(1), (x + 1).min(w - 1));
            let r = at(x, up) + at(x, down) + at(left, y) + at(right, y) - 4.0 * at(x, y);
            sum += r;
            sum_sq += r * r;
        }
    }
    let n = (w * h) as f64;
    let mean = sum / n;
    Ok((sum_sq / n - mean * mean).max(0.0))
}

pub fn is_blurry(img: &Image, threshold: f64) -> Result<bool> {
    Ok(laplacian_variance(img)? < threshold)
}

/// Mean BT.601 luma scaled to [0, 1]; 0 for an empty image.
pub fn mean_brightness(img: &Image) -> f64 {
    if img.is_empty() {
        return 0.0;
    }
    let total: f64 = img.pixels.chunks_exact(3).map(crate::geometry::luma_of).sum();
    (total / img.pixel_count() as f64 / 255.0).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyncParams {
    /// Pairing requires |t_camera − t_lidar| strictly below this.
    pub max_delta_ns: i64,
    pub blur_threshold: f64,
}

impl Default for SyncParams {
    fn default() -> Self {
        Self {
            max_delta_ns: DEFAULT_MAX_DELTA_NS,
            blur_threshold: DEFAULT_BLUR_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairedFrame {
    /// Index into the camera's frame sequence.
    pub frame_index: usize,
    /// Camera minus LiDAR timestamp.
    pub delta_ns: i64,
}

impl PairedFrame {
    pub fn delta_ms(&self) -> f64 {
        self.delta_ns as f64 / 1e6
    }
}

/// Pairing result for one LiDAR frame; `cameras[k]` is `None` when camera
/// `k` had no sharp frame inside the window.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameBundle {
    pub lidar_index: usize,
    pub lidar_timestamp_ns: i64,
    pub cameras: Vec<Option<PairedFrame>>,
}

impl FrameBundle {
    pub fn pairing_deltas_ms(&self) -> Vec<Option<f64>> {
        self.cameras.iter().map(|c| c.map(|p| p.delta_ms())).collect()
    }
}

fn check_monotonic(name: &str, ts: &[i64]) -> Result<()> {
    match ts.windows(2).position(|w| w[1] < w[0]) {
        Some(i) => Err(Error::MalformedStream(format!(
            "{name} timestamps decrease at index {}: {} then {}",
            i + 1,
            ts[i],
            ts[i + 1]
        ))),
        None => Ok(()),
    }
}

/// Pairs each LiDAR timestamp with the nearest sharp frame of every camera.
///
/// `is_sharp(camera, frame_index)` is consulted lazily, only for frames that
/// fall inside the window, and at most once per frame. Candidates are tried
/// by increasing |Δ|, ties going to the earlier frame; blurry candidates are
/// skipped in favour of the next nearest.
pub fn pair_timestamps<F>(
    lidar: &[i64],
    cameras: &[Vec<i64>],
    params: &SyncParams,
    mut is_sharp: F,
) -> Result<Vec<FrameBundle>>
where
    F: FnMut(usize, usize) -> Result<bool>,
{
    check_monotonic("LiDAR", lidar)?;
    for (k, ts) in cameras.iter().enumerate() {
        check_monotonic(&format!("camera {k}"), ts)?;
    }
    let mut sharp_cache: Vec<Vec<Option<bool>>> = cameras.iter().map(|ts| vec![None; ts.len()]).collect();
    let window = params.max_delta_ns;
    let mut out = Vec::with_capacity(lidar.len());
    for (li, &tl) in lidar.iter().enumerate() {
        let mut paired = Vec::with_capacity(cameras.len());
        for (k, ts) in cameras.iter().enumerate() {
            let lo = ts.partition_point(|&t| t <= tl - window);
            let hi = ts.partition_point(|&t| t < tl + window);
            let mut candidates: Vec<usize> = (lo..hi).collect();
            candidates.sort_by_key(|&i| ((ts[i] - tl).abs(), ts[i], i));
            let mut chosen = None;
            for i in candidates {
                let sharp = match sharp_cache[k][i] {
                    Some(s) => s,
                    None => {
                        let s = is_sharp(k, i)?;
                        sharp_cache[k][i] = Some(s);
                        s
                    }
                };
                if sharp {
                    chosen = Some(PairedFrame {
                        frame_index: i,
                        delta_ns: ts[i] - tl,
                    });
                    break;
                }
            }
            paired.push(chosen);
        }
        out.push(FrameBundle {
            lidar_index: li,
            lidar_timestamp_ns: tl,
            cameras: paired,
        });
    }
    Ok(out)
}

/// Pairs in-memory camera frames, gating them on `params.blur_threshold`.
pub fn pair_frames(lidar: &[i64], cameras: &[Vec<Image>], params: &SyncParams) -> Result<Vec<FrameBundle>> {
    let stamps: Vec<Vec<i64>> = cameras
        .iter()
        .map(|frames| frames.iter().map(|f| f.timestamp_ns).collect())
        .collect();
    pair_timestamps(lidar, &stamps, params, |k, i| {
        Ok(!is_blurry(&cameras[k][i], params.blur_threshold)?)
    })
}

/// Per-camera pairing counts and delta statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraSyncStats {
    pub camera: usize,
    pub paired: usize,
    pub absent: usize,
    pub max_abs_delta_ms: f64,
    pub mean_abs_delta_ms: f64,
}

pub fn sync_stats(bundles: &[FrameBundle], camera_count: usize) -> Vec<CameraSyncStats> {
    (0..camera_count)
        .map(|k| {
            let deltas: Vec<f64> = bundles
                .iter()
                .filter_map(|b| b.cameras.get(k).copied().flatten())
                .map(|p| p.delta_ms().abs())
                .collect();
            let paired = deltas.len();
            CameraSyncStats {
                camera: k,
                paired,
                absent: bundles.len() - paired,
                max_abs_delta_ms: deltas.iter().copied().fold(0.0, f64::max),
                mean_abs_delta_ms: if paired == 0 {
                    0.0
                } else {
                    deltas.iter().sum::<f64>() / paired as f64
                },
            }
        })
        .collect()
}
