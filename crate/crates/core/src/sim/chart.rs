//! Colour chart photographs with a known per-channel camera response.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::colorcal::ColorChart;
use crate::error::{Error, Result};
use crate::geometry::Image;

/// Affine camera response `observed = gain · reference + offset` per channel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelResponse {
    pub gain: f64,
    pub offset: f64,
}

impl ChannelResponse {
    pub const NEUTRAL: ChannelResponse = ChannelResponse { gain: 1.0, offset: 0.0 };
}

/// Renders `chart` onto a grey background. Every patch is filled with its
/// reference colour passed through `response`, shifted by one Gaussian draw
/// of `noise_sigma` per channel, and rounded to RGB8.
pub fn render_chart(
    chart: &ColorChart,
    width: u32,
    height: u32,
    response: &[ChannelResponse; 3],
    noise_sigma: f64,
    seed: u64,
) -> Result<Image> {
    chart.validate()?;
    if noise_sigma < 0.0 {
        return Err(Error::invalid("noise sigma must be non-negative"));
    }
    let mut img = Image::filled(width, height, [128, 128, 128]);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, noise_sigma.max(f64::MIN_POSITIVE)).expect("positive sigma");
    for (region, reference) in chart.patch_regions.iter().zip(&chart.reference_rgb) {
        if region.x + region.width > width || region.y + region.height > height {
            return Err(Error::invalid("chart does not fit in the image"));
        }
        let ideal: [f64; 3] = std::array::from_fn(|c| response[c].gain * reference[c] + response[c].offset);
        let shift: [f64; 3] = if noise_sigma > 0.0 {
            std::array::from_fn(|_| noise.sample(&mut rng))
        } else {
            [0.0; 3]
        };
        let rgb = std::array::from_fn(|c| (ideal[c] + shift[c]).round().clamp(0.0, 255.0) as u8);
        for y in region.y..region.y + region.height {
            for x in region.x..region.x + region.width {
                img.put(x, y, rgb);
            }
        }
    }
    Ok(img)
}
