use super::{Enhancement, Enhancer, DEFAULT_TARGET_BRIGHTNESS};
use crate::error::{Error, Result};
use crate::geometry::{Image, LUMA_WEIGHTS};

/// Gamma lift towards a target brightness, a 1st–99th percentile luma
/// stretch, then a final exponent chosen so the output mean lands on the
/// target. All three stages compose into one monotone 256-entry table that
/// is applied to every channel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BuiltinEnhancer {
    target: f64,
}

impl Default for BuiltinEnhancer {
    fn default() -> Self {
        Self {
            target: DEFAULT_TARGET_BRIGHTNESS,
        }
    }
}

/// Per-channel value histograms.
struct Histograms([[u64; 256]; 3]);

impl Histograms {
    fn of(img: &Image) -> Self {
        let mut h = [[0u64; 256]; 3];
        for p in img.pixels.chunks_exact(3) {
            for c in 0..3 {
                h[c][p[c] as usize] += 1;
            }
        }
        Self(h)
    }

    /// Mean luma on [0, 1] after mapping every channel through `lut`.
    fn mean_luma(&self, lut: &[f64; 256], n: f64) -> f64 {
        let mut total = 0.0;
        for (hist, weight) in self.0.iter().zip(LUMA_WEIGHTS) {
            let s: f64 = hist.iter().zip(lut).map(|(&k, &v)| k as f64 * v).sum();
            total += weight * s;
        }
        total / n / 255.0
    }
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    let idx = ((sorted.len() - 1) as f64 * q).round() as usize;
    sorted[idx]
}

impl BuiltinEnhancer {
    pub fn new(target_brightness: f64) -> Result<Self> {
        if !(target_brightness > 0.0 && target_brightness < 1.0) {
            return Err(Error::invalid(format!(
                "target brightness {target_brightness} outside (0, 1)"
            )));
        }
        Ok(Self {
            target: target_brightness,
        })
    }

    pub fn target(&self) -> f64 {
        self.target
    }

    /// The tone curve for this image, or `None` for an all-black input.
    pub fn tone_curve(&self, img: &Image) -> Option<[u8; 256]> {
        let n = img.pixel_count() as f64;
        if n == 0.0 {
            return None;
        }
        let hist = Histograms::of(img);
        let identity: [f64; 256] = std::array::from_fn(|v| v as f64);
        let mean = hist.mean_luma(&identity, n);
        if mean <= 0.0 {
            return None;
        }

        let gamma = if mean < 1.0 {
            (self.target.ln() / mean.ln()).clamp(0.05, 20.0)
        } else {
            1.0
        };
        let lifted: [f64; 256] = std::array::from_fn(|v| 255.0 * (v as f64 / 255.0).powf(gamma));

        let mut luma: Vec<f64> = img
            .pixels
            .chunks_exact(3)
            .map(|p| {
                LUMA_WEIGHTS[0] * lifted[p[0] as usize]
                    + LUMA_WEIGHTS[1] * lifted[p[1] as usize]
                    + LUMA_WEIGHTS[2] * lifted[p[2] as usize]
            })
            .collect();
        luma.sort_by(f64::total_cmp);
        let (lo, hi) = (percentile(&luma, 0.01), percentile(&luma, 0.99));
        let stretched: [f64; 256] = if hi - lo >= 1.0 {
            std::array::from_fn(|v| ((lifted[v] - lo) / (hi - lo) * 255.0).clamp(0.0, 255.0))
        } else {
            lifted
        };

        let with_exponent = |beta: f64| -> [f64; 256] {
            std::array::from_fn(|v| {
                (255.0 * (stretched[v] / 255.0).powf(beta) + 0.5)
                    .floor()
                    .clamp(0.0, 255.0)
            })
        };
        let tol = 0.005;
        let mut best = with_exponent(1.0);
        if (hist.mean_luma(&best, n) - self.target).abs() > tol {
            // Larger exponents darken; bisect on log(beta).
            let (mut lo_b, mut hi_b) = (-4.0f64, 4.0f64);
            let mut best_err = f64::INFINITY;
            for _ in 0..60 {
                let mid = 0.5 * (lo_b + hi_b);
                let lut = with_exponent(mid.exp());
                let m = hist.mean_luma(&lut, n);
                let err = (m - self.target).abs();
                if err < best_err {
                    best_err = err;
                    best = lut;
                }
                if err <= tol {
                    break;
                }
                if m > self.target {
                    lo_b = mid;
                } else {
                    hi_b = mid;
                }
            }
        }
        Some(best.map(|v| v as u8))
    }
}

impl Enhancer for BuiltinEnhancer {
    fn name(&self) -> &str {
        "builtin"
    }

    fn enhance(&self, img: &Image) -> Result<Enhancement> {
        Ok(match self.tone_curve(img) {
            None => Enhancement {
                image: img.clone(),
                no_signal: true,
            },
            Some(lut) => Enhancement {
                image: img.with_pixels(img.pixels.iter().map(|&v| lut[v as usize]).collect()),
                no_signal: false,
            },
        })
    }

    fn is_deterministic(&self) -> bool {
        true
    }
}
