use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::framesync::mean_brightness;
use crate::geometry::Image;

#[derive(Debug, Clone, Copy)]
struct CameraState {
    last_timestamp_ns: i64,
    smoothed_gain: f64,
}

/// Exponential moving average of each camera's global mean luma.
///
/// Every frame after the first is rescaled so its mean luma follows the
/// smoothed value rather than the raw one, damping flicker between frames.
#[derive(Debug, Clone)]
pub struct TemporalSmoother {
    window: u32,
    cameras: HashMap<u8, CameraState>,
}

impl TemporalSmoother {
    pub fn new(window: u32) -> Result<Self> {
        if window == 0 {
            return Err(Error::invalid("smoothing window must be at least 1 frame"));
        }
        Ok(Self {
            window,
            cameras: HashMap::new(),
        })
    }

    pub fn window(&self) -> u32 {
        self.window
    }

    /// Weight of the previous smoothed gain.
    pub fn retention(&self) -> f64 {
        1.0 - 1.0 / f64::from(self.window)
    }

    pub fn smooth(&mut self, img: &Image) -> Result<Image> {
        let gain = mean_brightness(img);
        let retention = self.retention();
        let Some(state) = self.cameras.get_mut(&img.camera_id) else {
            self.cameras.insert(
                img.camera_id,
                CameraState {
                    last_timestamp_ns: img.timestamp_ns,
                    smoothed_gain: gain,
                },
            );
            return Ok(img.clone());
        };
        if img.timestamp_ns < state.last_timestamp_ns {
            return Err(Error::MalformedStream(format!(
                "camera {} frame at {} ns arrived after {} ns",
                img.camera_id, img.timestamp_ns, state.last_timestamp_ns
            )));
        }
        state.last_timestamp_ns = img.timestamp_ns;
        state.smoothed_gain = retention * state.smoothed_gain + (1.0 - retention) * gain;
        if gain <= 0.0 {
            return Ok(img.clone());
        }
        let scale = state.smoothed_gain / gain;
        if scale == 1.0 {
            return Ok(img.clone());
        }
        let lut: [u8; 256] = std::array::from_fn(|v| (v as f64 * scale + 0.5).floor().clamp(0.0, 255.0) as u8);
        Ok(img.with_pixels(img.pixels.iter().map(|&v| lut[v as usize]).collect()))
    }
}
