//! Low-light enhancement: brightness gate, enhancer contract, a built-in
//! deterministic enhancer, temporal smoothing and image-quality metrics.

mod builtin;
mod metrics;
mod smoothing;

pub use builtin::BuiltinEnhancer;
pub use metrics::{charbonnier, psnr, ssim, PSNR_CAP_DB};
pub use smoothing::TemporalSmoother;

use crate::error::Result;
use crate::framesync::mean_brightness;
use crate::geometry::Image;

pub const DEFAULT_BRIGHTNESS_THRESHOLD: f64 = 0.12;
pub const DEFAULT_TARGET_BRIGHTNESS: f64 = 0.4;

/// Frames darker than `threshold` (mean luma on [0, 1]) get enhanced.
pub fn should_enhance(img: &Image, threshold: f64) -> bool {
    mean_brightness(img) < threshold
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Enhancement {
    pub image: Image,
    /// Set when the input carried no signal and was passed through.
    pub no_signal: bool,
}

/// Anything that maps a frame to an enhanced frame of the same size.
///
/// A trained network can be plugged in here; the pipeline only relies on the
/// output having the input's dimensions and metadata.
pub trait Enhancer: Send + Sync {
    fn name(&self) -> &str;
    fn enhance(&self, img: &Image) -> Result<Enhancement>;
    fn is_deterministic(&self) -> bool;
}

/// Built-in enhancer with the default target brightness.
pub fn builtin_enhance(img: &Image, target_brightness: f64) -> Result<Enhancement> {
    BuiltinEnhancer::new(target_brightness)?.enhance(img)
}
