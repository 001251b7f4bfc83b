use nalgebra::Point3;
use rayon::prelude::*;

use super::{centre_distance2, frame_cameras, pixel_centre, ColourisedCloud, SyncedFrame};
use crate::calib::{CalibrationBundle, CameraId, CameraModel};
use crate::error::Result;
use crate::geometry::{Image, UndistortMap};

const CHUNK: usize = 16 * 1024;
const NO_CAMERA: u8 = u8::MAX;

/// Array strategy with per-camera undistortion tables built once and reused
/// across frames.
///
/// A first pass projects the whole cloud into every camera and keeps only
/// the winning camera and pixel per point. Winners are then bucketed by
/// camera and image row so the colour pass walks each image and its table
/// top to bottom, and every point is coloured exactly once.
pub struct BatchedFuser<'a> {
    calib: &'a CalibrationBundle,
    maps: Vec<UndistortMap>,
}

/// Per-point winner of the projection pass.
struct Winners {
    distance: Vec<f64>,
    /// Index into the frame's camera list, or [`NO_CAMERA`].
    camera: Vec<u8>,
    /// Row-major centre pixel in the winning image.
    pixel: Vec<u32>,
}

impl<'a> BatchedFuser<'a> {
    pub fn new(calib: &'a CalibrationBundle) -> Self {
        let maps = calib
            .cameras
            .iter()
            .map(|c| UndistortMap::new(&c.intrinsics, &c.distortion, c.intrinsics.width, c.intrinsics.height))
            .collect();
        Self { calib, maps }
    }

    pub fn fuse(&self, frame: &SyncedFrame) -> Result<ColourisedCloud> {
        let cameras = frame_cameras(frame, self.calib)?;
        let pts = &frame.cloud.points;
        let n = pts.len();
        let mut win = Winners {
            distance: vec![f64::INFINITY; n],
            camera: vec![NO_CAMERA; n],
            pixel: vec![0; n],
        };
        project_pass(&cameras, pts, &mut win);

        let order = bucket_by_row(&win, &cameras);
        let maps: Vec<&UndistortMap> = cameras
            .iter()
            .map(|(cam, _)| {
                let slot = self
                    .calib
                    .cameras
                    .iter()
                    .position(|c| c.id == cam.id)
                    .expect("frame cameras come from the bundle");
                &self.maps[slot]
            })
            .collect();
        let mut colours = vec![[0u8; 3]; order.len()];
        colours
            .par_chunks_mut(CHUNK)
            .zip(order.par_chunks(CHUNK))
            .for_each(|(out, idx)| {
                for (colour, &i) in out.iter_mut().zip(idx) {
                    let i = i as usize;
                    let slot = win.camera[i] as usize;
                    let img = cameras[slot].1;
                    let w = img.width;
                    *colour = maps[slot].block_mean(img, win.pixel[i] % w, win.pixel[i] / w);
                }
            });

        let mut rgb = vec![[0u8; 3]; n];
        let mut source: Vec<Option<CameraId>> = vec![None; n];
        for (&i, colour) in order.iter().zip(colours) {
            let i = i as usize;
            rgb[i] = colour;
            source[i] = Some(cameras[win.camera[i] as usize].0.id);
        }
        Ok(ColourisedCloud {
            points: pts.clone(),
            rgb,
            source,
            timestamp_ns: frame.cloud.timestamp_ns,
        })
    }
}

/// Transform, depth test, projection, bounds mask and winner update for
/// every camera in one sweep over the cloud. Cameras arrive in ascending id
/// order; a strict comparison leaves ties with the lowest id.
fn project_pass(cameras: &[(&CameraModel, &Image)], pts: &[Point3<f64>], win: &mut Winners) {
    win.distance
        .par_chunks_mut(CHUNK)
        .zip(win.camera.par_chunks_mut(CHUNK))
        .zip(win.pixel.par_chunks_mut(CHUNK))
        .zip(pts.par_chunks(CHUNK))
        .for_each(|(((distance, camera), pixel), pts)| {
            for (j, p) in pts.iter().enumerate() {
                for (slot, (cam, img)) in cameras.iter().enumerate() {
                    let [x, y, z] = cam.extrinsic.apply_xyz(p.x, p.y, p.z);
                    let Some((u, v)) = cam.intrinsics.project_xyz(x, y, z) else {
                        continue;
                    };
                    let Some((cx, cy)) = pixel_centre(u, v, img.width, img.height) else {
                        continue;
                    };
                    let d = centre_distance2(cam, u, v);
                    if d < distance[j] {
                        distance[j] = d;
                        camera[j] = slot as u8;
                        pixel[j] = cy * img.width + cx;
                    }
                }
            }
        });
}

/// Indices of coloured points, stably ordered by camera and then image row.
fn bucket_by_row(win: &Winners, cameras: &[(&CameraModel, &Image)]) -> Vec<u32> {
    let mut offsets = Vec::with_capacity(cameras.len() + 1);
    offsets.push(0usize);
    for (_, img) in cameras {
        offsets.push(offsets.last().unwrap() + img.height as usize);
    }
    let key = |i: usize| {
        let slot = win.camera[i] as usize;
        offsets[slot] + (win.pixel[i] / cameras[slot].1.width) as usize
    };
    let mut counts = vec![0usize; offsets[cameras.len()] + 1];
    for i in 0..win.camera.len() {
        if win.camera[i] != NO_CAMERA {
            counts[key(i) + 1] += 1;
        }
    }
    for b in 1..counts.len() {
        counts[b] += counts[b - 1];
    }
    let mut order = vec![0u32; counts[counts.len() - 1]];
    for i in 0..win.camera.len() {
        if win.camera[i] != NO_CAMERA {
            let b = key(i);
            order[counts[b]] = i as u32;
            counts[b] += 1;
        }
    }
    order
}
