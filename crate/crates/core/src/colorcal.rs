//! Per-channel affine colour correction fitted against a 24-patch chart.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Image;

pub const PATCH_COUNT: usize = 24;

/// sRGB values of the classic 24-patch colour checker, row by row.
pub const CHECKER_REFERENCE: [[u8; 3]; PATCH_COUNT] = [
    [115, 82, 68],
    [194, 150, 130],
    [98, 122, 157],
    [87, 108, 67],
    [133, 128, 177],
    [103, 189, 170],
    [214, 126, 44],
    [80, 91, 166],
    [193, 90, 99],
    [94, 60, 108],
    [157, 188, 64],
    [224, 163, 46],
    [56, 61, 150],
    [70, 148, 73],
    [175, 54, 60],
    [231, 199, 31],
    [187, 86, 149],
    [8, 133, 161],
    [243, 243, 242],
    [200, 200, 200],
    [160, 160, 160],
    [122, 122, 121],
    [85, 85, 85],
    [52, 52, 52],
];

/// Axis-aligned pixel rectangle, half-open on the right and bottom.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatchRegion {
    pub x: u32,
    pub y: u32,
    pub width: u32,
    pub height: u32,
}

impl PatchRegion {
    pub fn new(x: u32, y: u32, width: u32, height: u32) -> Self {
        Self { x, y, width, height }
    }

    pub fn area(&self) -> u64 {
        u64::from(self.width) * u64::from(self.height)
    }

    fn overlaps(&self, other: &PatchRegion) -> bool {
        self.x < other.x + other.width
            && other.x < self.x + self.width
            && self.y < other.y + other.height
            && other.y < self.y + self.height
    }

    fn fits(&self, width: u32, height: u32) -> bool {
        u64::from(self.x) + u64::from(self.width) <= u64::from(width)
            && u64::from(self.y) + u64::from(self.height) <= u64::from(height)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColorChart {
    pub reference_rgb: Vec<[f64; 3]>,
    pub patch_regions: Vec<PatchRegion>,
}

impl ColorChart {
    pub fn new(reference_rgb: Vec<[f64; 3]>, patch_regions: Vec<PatchRegion>) -> Result<Self> {
        let chart = Self {
            reference_rgb,
            patch_regions,
        };
        chart.validate()?;
        Ok(chart)
    }

    /// Standard checker reference laid out as a 6×4 grid of square patches.
    pub fn checker_grid(origin_x: u32, origin_y: u32, patch: u32, gap: u32) -> Result<Self> {
        let regions = (0..PATCH_COUNT as u32)
            .map(|i| {
                let (col, row) = (i % 6, i / 6);
                PatchRegion::new(
                    origin_x + col * (patch + gap),
                    origin_y + row * (patch + gap),
                    patch,
                    patch,
                )
            })
            .collect();
        let reference = CHECKER_REFERENCE
            .iter()
            .map(|c| [f64::from(c[0]), f64::from(c[1]), f64::from(c[2])])
            .collect();
        Self::new(reference, regions)
    }

    pub fn validate(&self) -> Result<()> {
        if self.reference_rgb.len() != PATCH_COUNT || self.patch_regions.len() != PATCH_COUNT {
            return Err(Error::invalid(format!(
                "colour chart needs {PATCH_COUNT} references and regions, got {} and {}",
                self.reference_rgb.len(),
                self.patch_regions.len()
            )));
        }
        if self.reference_rgb.iter().flatten().any(|v| !(0.0..=255.0).contains(v)) {
            return Err(Error::invalid("chart reference values must lie in [0, 255]"));
        }
        for (i, r) in self.patch_regions.iter().enumerate() {
            if r.area() < 4 {
                return Err(Error::invalid(format!("patch {i} has area {} < 4", r.area())));
            }
            if self.patch_regions[..i].iter().any(|o| o.overlaps(r)) {
                return Err(Error::invalid(format!("patch {i} overlaps an earlier patch")));
            }
        }
        Ok(())
    }
}

/// Mean RGB of each region. Regions must hold at least 4 pixels.
pub fn extract_region_means(img: &Image, regions: &[PatchRegion]) -> Result<Vec<[f64; 3]>> {
    regions
        .iter()
        .enumerate()
        .map(|(i, r)| {
            if r.area() < 4 {
                return Err(Error::invalid(format!("patch {i} has area {} < 4", r.area())));
            }
            if !r.fits(img.width, img.height) {
                return Err(Error::invalid(format!(
                    "patch {i} lies outside the {}x{} image",
                    img.width, img.height
                )));
            }
            let mut sum = [0u64; 3];
            for y in r.y..r.y + r.height {
                for x in r.x..r.x + r.width {
                    let p = img.get(x, y);
                    for c in 0..3 {
                        sum[c] += u64::from(p[c]);
                    }
                }
            }
            let n = r.area() as f64;
            Ok(sum.map(|s| s as f64 / n))
        })
        .collect()
}

pub fn extract_patch_means(img: &Image, chart: &ColorChart) -> Result<Vec<[f64; 3]>> {
    chart.validate()?;
    extract_region_means(img, &chart.patch_regions)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelFit {
    pub slope: f64,
    pub intercept: f64,
    pub fit_r2: f64,
}

impl ChannelFit {
    pub const IDENTITY: ChannelFit = ChannelFit {
        slope: 1.0,
        intercept: 0.0,
        fit_r2: 1.0,
    };

    #[inline]
    pub fn apply(&self, v: u8) -> u8 {
        (self.slope * f64::from(v) + self.intercept + 0.5)
            .floor()
            .clamp(0.0, 255.0) as u8
    }

    pub fn lut(&self) -> [u8; 256] {
        std::array::from_fn(|v| self.apply(v as u8))
    }
}

/// Six coefficients per camera: slope and intercept for each channel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ColorCoefficients {
    pub red: ChannelFit,
    pub green: ChannelFit,
    pub blue: ChannelFit,
}

impl Default for ColorCoefficients {
    fn default() -> Self {
        Self::IDENTITY
    }
}

impl ColorCoefficients {
    pub const IDENTITY: ColorCoefficients = ColorCoefficients {
        red: ChannelFit::IDENTITY,
        green: ChannelFit::IDENTITY,
        blue: ChannelFit::IDENTITY,
    };

    pub fn channels(&self) -> [&ChannelFit; 3] {
        [&self.red, &self.green, &self.blue]
    }

    pub fn is_identity(&self) -> bool {
        self.channels().iter().all(|c| c.slope == 1.0 && c.intercept == 0.0)
    }

    pub fn validate(&self) -> Result<()> {
        for c in self.channels() {
            if !(c.slope > 0.0 && c.slope.is_finite()) {
                return Err(Error::invalid(format!("colour slope {} must be positive", c.slope)));
            }
            if !(-255.0..=255.0).contains(&c.intercept) {
                return Err(Error::invalid(format!(
                    "colour intercept {} outside [-255, 255]",
                    c.intercept
                )));
            }
        }
        Ok(())
    }
}

/// Ordinary least squares fit of `reference = slope·observed + intercept`.
pub fn fit_channel(observed: &[f64], reference: &[f64]) -> Result<ChannelFit> {
    if observed.len() != reference.len() || observed.len() < 2 {
        return Err(Error::invalid(format!(
            "need at least two paired samples, got {} observed and {} reference",
            observed.len(),
            reference.len()
        )));
    }
    let n = observed.len() as f64;
    let mean_x = observed.iter().sum::<f64>() / n;
    let mean_y = reference.iter().sum::<f64>() / n;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in observed.iter().zip(reference) {
        let (dx, dy) = (x - mean_x, y - mean_y);
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    if sxx <= 1e-12 * n {
        return Err(Error::DegenerateFit("observed channel has zero variance".into()));
    }
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_x;
    let ss_res: f64 = observed
        .iter()
        .zip(reference)
        .map(|(x, y)| {
            let r = y - (slope * x + intercept);
            r * r
        })
        .sum();
    let fit_r2 = if syy > 0.0 {
        (1.0 - ss_res / syy).clamp(0.0, 1.0)
    } else {
        1.0
    };
    Ok(ChannelFit {
        slope,
        intercept,
        fit_r2,
    })
}

pub fn fit_coefficients(observed: &[[f64; 3]], reference: &[[f64; 3]]) -> Result<ColorCoefficients> {
    if observed.len() != reference.len() {
        return Err(Error::invalid("observed and reference patch counts differ"));
    }
    let channel = |c: usize| -> Result<ChannelFit> {
        let obs: Vec<f64> = observed.iter().map(|p| p[c]).collect();
        let refs: Vec<f64> = reference.iter().map(|p| p[c]).collect();
        fit_channel(&obs, &refs)
    };
    Ok(ColorCoefficients {
        red: channel(0)?,
        green: channel(1)?,
        blue: channel(2)?,
    })
}

pub fn apply_correction(img: &Image, coeffs: &ColorCoefficients) -> Image {
    let luts = coeffs.channels().map(|c| c.lut());
    let pixels = img
        .pixels
        .chunks_exact(3)
        .flat_map(|p| [luts[0][p[0] as usize], luts[1][p[1] as usize], luts[2][p[2] as usize]])
        .collect();
    img.with_pixels(pixels)
}
