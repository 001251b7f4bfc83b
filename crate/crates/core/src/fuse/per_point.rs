use super::{block_mean, centre_distance2, frame_cameras, pixel_centre, ColourisedCloud, SyncedFrame};
use crate::calib::{CalibrationBundle, CameraId};
use crate::error::Result;
use crate::geometry::undistorted_pixel;

/// Loop strategy: every point visits every camera in turn, and each of its
/// nine colour samples is undistorted on demand.
pub fn colourise_per_point(frame: &SyncedFrame, calib: &CalibrationBundle) -> Result<ColourisedCloud> {
    let cameras = frame_cameras(frame, calib)?;
    let n = frame.cloud.len();
    let mut rgb = Vec::with_capacity(n);
    let mut source = Vec::with_capacity(n);
    for p in &frame.cloud.points {
        let mut best: Option<(f64, CameraId, [u8; 3])> = None;
        for (cam, img) in &cameras {
            let [x, y, z] = cam.extrinsic.apply_xyz(p.x, p.y, p.z);
            let Some((u, v)) = cam.intrinsics.project_xyz(x, y, z) else {
                continue;
            };
            let Some((cx, cy)) = pixel_centre(u, v, img.width, img.height) else {
                continue;
            };
            let colour = block_mean(cx, cy, img.width, img.height, |px, py| {
                undistorted_pixel(img, &cam.intrinsics, &cam.distortion, px, py)
            });
            let d = centre_distance2(cam, u, v);
            // Cameras arrive in ascending id order, so a strict comparison
            // leaves ties with the lowest id.
            if best.is_none_or(|(bd, _, _)| d < bd) {
                best = Some((d, cam.id, colour));
            }
        }
        match best {
            Some((_, id, colour)) => {
                rgb.push(colour);
                source.push(Some(id));
            }
            None => {
                rgb.push([0, 0, 0]);
                source.push(None);
            }
        }
    }
    Ok(ColourisedCloud {
        points: frame.cloud.points.clone(),
        rgb,
        source,
        timestamp_ns: frame.cloud.timestamp_ns,
    })
}
