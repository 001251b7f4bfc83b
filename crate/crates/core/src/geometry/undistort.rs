//! Inverse-mapped lens undistortion with fixed-point bilinear sampling.
//!
//! Every output pixel of the undistorted image is pushed through the
//! Brown–Conrady model to find its source position in the raw frame. The
//! resulting sample positions are quantised to 1/256 pixel so that sampling a
//! single pixel on demand and remapping a whole image give identical bytes.

use super::{CameraIntrinsics, DistortionCoefficients, Image};

const WEIGHT_ONE: u32 = 256;
const SNAP_EPS: f64 = 1e-6;

/// Bilinear source location for one undistorted pixel.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Tap {
    /// Index of the top-left source pixel, `u32::MAX` when outside the frame.
    base: u32,
    wx: u16,
    wy: u16,
    step_x: u8,
    step_y: u8,
}

impl Tap {
    const INVALID: Tap = Tap {
        base: u32::MAX,
        wx: 0,
        wy: 0,
        step_x: 0,
        step_y: 0,
    };

    pub fn is_valid(&self) -> bool {
        self.base != u32::MAX
    }

    /// Locates the source sample for undistorted pixel `(x, y)`.
    #[inline]
    pub fn locate(k: &CameraIntrinsics, d: &DistortionCoefficients, width: u32, height: u32, x: u32, y: u32) -> Tap {
        let (xn, yn) = k.to_normalized(x as f64, y as f64);
        let (xd, yd) = d.distort(xn, yn);
        let (us, vs) = k.to_pixel(xd, yd);
        Self::at(us, vs, width, height)
    }

    #[inline]
    fn at(us: f64, vs: f64, width: u32, height: u32) -> Tap {
        let us = snap(us);
        let vs = snap(vs);
        let (wmax, hmax) = (width as f64 - 1.0, height as f64 - 1.0);
        if !(us >= 0.0 && us <= wmax && vs >= 0.0 && vs <= hmax) {
            return Tap::INVALID;
        }
        let (mut x0, mut y0) = (us.floor() as u32, vs.floor() as u32);
        let mut wx = ((us - x0 as f64) * WEIGHT_ONE as f64).round() as u32;
        let mut wy = ((vs - y0 as f64) * WEIGHT_ONE as f64).round() as u32;
        if wx == WEIGHT_ONE {
            x0 += 1;
            wx = 0;
        }
        if wy == WEIGHT_ONE {
            y0 += 1;
            wy = 0;
        }
        Tap {
            base: y0 * width + x0,
            wx: wx as u16,
            wy: wy as u16,
            step_x: u8::from(x0 + 1 < width),
            step_y: u8::from(y0 + 1 < height),
        }
    }

    /// Blends the four neighbours of the tap in `src`; black when invalid.
    #[inline(always)]
    pub fn sample(&self, src: &Image) -> [u8; 3] {
        if !self.is_valid() {
            return [0, 0, 0];
        }
        let stride = src.width as usize * 3;
        let i00 = self.base as usize * 3;
        let i01 = i00 + 3 * self.step_x as usize;
        let i10 = i00 + stride * self.step_y as usize;
        let i11 = i10 + 3 * self.step_x as usize;
        let (wx, wy) = (self.wx as u32, self.wy as u32);
        let (ix, iy) = (WEIGHT_ONE - wx, WEIGHT_ONE - wy);
        let px = &src.pixels;
        let corner = |i: usize| -> [u8; 3] { px[i..i + 3].try_into().expect("three channels") };
        let (p00, p01, p10, p11) = (corner(i00), corner(i01), corner(i10), corner(i11));
        let mut out = [0u8; 3];
        for c in 0..3 {
            let top = p00[c] as u32 * ix + p01[c] as u32 * wx;
            let bottom = p10[c] as u32 * ix + p11[c] as u32 * wx;
            out[c] = ((top * iy + bottom * wy + (1 << 15)) >> 16) as u8;
        }
        out
    }
}

#[inline]
fn snap(v: f64) -> f64 {
    let r = v.round();
    if (v - r).abs() < SNAP_EPS {
        r
    } else {
        v
    }
}

/// Precomputed remapping table for one camera and frame size.
#[derive(Debug, Clone)]
pub struct UndistortMap {
    width: u32,
    height: u32,
    identity: bool,
    taps: Vec<Tap>,
}

impl UndistortMap {
    pub fn new(k: &CameraIntrinsics, d: &DistortionCoefficients, width: u32, height: u32) -> Self {
        let identity = d.is_zero();
        let taps = if identity {
            Vec::new()
        } else {
            let mut taps = Vec::with_capacity(width as usize * height as usize);
            for y in 0..height {
                for x in 0..width {
                    taps.push(Tap::locate(k, d, width, height, x, y));
                }
            }
            taps
        };
        Self {
            width,
            height,
            identity,
            taps,
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn is_identity(&self) -> bool {
        self.identity
    }

    /// Undistorted value of pixel `(x, y)`.
    #[inline]
    pub fn sample(&self, src: &Image, x: u32, y: u32) -> [u8; 3] {
        if self.identity {
            src.get(x, y)
        } else {
            self.taps[(y * self.width + x) as usize].sample(src)
        }
    }

    /// Rounded mean of the undistorted 3×3 block centred on `(cx, cy)`, with
    /// coordinates clamped at the frame border.
    pub fn block_mean(&self, src: &Image, cx: u32, cy: u32) -> [u8; 3] {
        let (w, h) = (self.width, self.height);
        let mut sum = [0u32; 3];
        let mut add = |px: [u8; 3]| {
            for c in 0..3 {
                sum[c] += px[c] as u32;
            }
        };
        if !self.identity && cx >= 1 && cy >= 1 && cx + 1 < w && cy + 1 < h {
            for y in cy - 1..=cy + 1 {
                let start = (y * w + cx - 1) as usize;
                for tap in &self.taps[start..start + 3] {
                    add(tap.sample(src));
                }
            }
        } else {
            for dy in [-1i64, 0, 1] {
                let y = (cy as i64 + dy).clamp(0, h as i64 - 1) as u32;
                for dx in [-1i64, 0, 1] {
                    let x = (cx as i64 + dx).clamp(0, w as i64 - 1) as u32;
                    add(self.sample(src, x, y));
                }
            }
        }
        sum.map(|s| ((s + 4) / 9) as u8)
    }

    /// Remaps a whole frame; the frame must match the map's size.
    pub fn apply(&self, src: &Image) -> Image {
        assert!(
            src.width == self.width && src.height == self.height,
            "undistort map built for {}x{}, frame is {}x{}",
            self.width,
            self.height,
            src.width,
            src.height
        );
        if self.identity {
            return src.clone();
        }
        let mut pixels = vec![0u8; src.pixels.len()];
        for (dst, tap) in pixels.chunks_exact_mut(3).zip(&self.taps) {
            dst.copy_from_slice(&tap.sample(src));
        }
        src.with_pixels(pixels)
    }
}

/// Removes lens distortion from a frame by inverse mapping with bilinear
/// sampling; source positions outside the raw frame produce black.
pub fn undistort_image(img: &Image, k: &CameraIntrinsics, d: &DistortionCoefficients) -> Image {
    UndistortMap::new(k, d, img.width, img.height).apply(img)
}

/// Undistorted value of a single pixel, computed without a table.
#[inline]
pub fn undistorted_pixel(img: &Image, k: &CameraIntrinsics, d: &DistortionCoefficients, x: u32, y: u32) -> [u8; 3] {
    if d.is_zero() {
        img.get(x, y)
    } else {
        Tap::locate(k, d, img.width, img.height, x, y).sample(img)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn k() -> CameraIntrinsics {
        CameraIntrinsics::new(500.0, 500.0, 320.0, 240.0, 640, 480).unwrap()
    }

    #[test]
    fn zero_distortion_is_identity() {
        let img = Image::from_fn(64, 48, |x, y| [(x * 3) as u8, (y * 5) as u8, ((x ^ y) * 7) as u8]);
        let kk = CameraIntrinsics::new(40.0, 41.0, 31.5, 23.2, 64, 48).unwrap();
        assert_eq!(undistort_image(&img, &kk, &DistortionCoefficients::none()), img);
        // The table path must agree even when forced through the sampler.
        for y in 0..48 {
            for x in 0..64 {
                let tap = Tap::locate(&kk, &DistortionCoefficients::none(), 64, 48, x, y);
                assert_eq!(tap.sample(&img), img.get(x, y));
            }
        }
    }

    #[test]
    fn table_and_on_demand_sampling_agree() {
        let img = Image::from_fn(640, 480, |x, y| {
            [(x % 251) as u8, (y % 241) as u8, ((x + y) % 239) as u8]
        });
        let d = DistortionCoefficients {
            k1: -0.2,
            k2: 0.03,
            p1: 0.001,
            p2: 0.0007,
            k3: 0.0,
        };
        let map = UndistortMap::new(&k(), &d, 640, 480);
        let full = map.apply(&img);
        for y in (0..480).step_by(7) {
            for x in (0..640).step_by(5) {
                assert_eq!(full.get(x, y), undistorted_pixel(&img, &k(), &d, x, y));
            }
        }
    }

    /// Renders anti-aliased grid lines that are straight in the ideal
    /// (undistorted) image, as the lens would record them.
    fn distorted_grid(k: &CameraIntrinsics, d: &DistortionCoefficients, spacing: f64) -> Image {
        Image::from_fn(k.width, k.height, |u, v| {
            let (xd, yd) = k.to_normalized(u as f64, v as f64);
            let (x, y) = d.undistort(xd, yd);
            let (ui, vi) = k.to_pixel(x, y);
            let dist = |c: f64| {
                let r = c / spacing;
                (r - r.round()).abs() * spacing
            };
            let line = dist(ui).min(dist(vi));
            let val = (255.0 * (1.0 - line / 1.5).max(0.0)).round() as u8;
            [val, val, val]
        })
    }

    /// Max deviation from a least-squares line of the row centroid of the
    /// horizontal grid line nearest `row`, sampled away from vertical lines.
    fn straightness_residual(img: &Image, row: f64, spacing: f64) -> f64 {
        let mut samples = Vec::new();
        for u in 20..img.width - 20 {
            let r = u as f64 / spacing;
            if (r - r.round()).abs() * spacing < 8.0 {
                continue;
            }
            let (mut w, mut wy) = (0.0, 0.0);
            for v in (row as i64 - 12).max(0)..(row as i64 + 12).min(img.height as i64) {
                let val = img.get(u, v as u32)[0] as f64;
                w += val;
                wy += val * v as f64;
            }
            if w > 100.0 {
                samples.push((u as f64, wy / w));
            }
        }
        let n = samples.len() as f64;
        let mx = samples.iter().map(|s| s.0).sum::<f64>() / n;
        let my = samples.iter().map(|s| s.1).sum::<f64>() / n;
        let sxy: f64 = samples.iter().map(|s| (s.0 - mx) * (s.1 - my)).sum();
        let sxx: f64 = samples.iter().map(|s| (s.0 - mx).powi(2)).sum();
        let slope = sxy / sxx;
        samples
            .iter()
            .map(|s| (s.1 - (my + slope * (s.0 - mx))).abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn barrel_distorted_grid_is_straightened() {
        let kk = k();
        let d = DistortionCoefficients::radial(-0.2, 0.0, 0.0);
        let spacing = 80.0;
        let raw = distorted_grid(&kk, &d, spacing);
        let fixed = undistort_image(&raw, &kk, &d);
        // Line at ideal row 80 lies far from the principal point, where
        // curvature is strongest.
        let before = straightness_residual(&raw, 98.0, spacing);
        let after = straightness_residual(&fixed, 80.0, spacing);
        assert!(before > 2.0, "raw grid should be visibly curved, residual {before}");
        assert!(after < 0.5, "undistorted residual {after}");
    }

    #[test]
    fn out_of_frame_samples_are_black() {
        // Strong pincushion pulls corner sources outside the raw frame.
        let img = Image::filled(64, 48, [200, 200, 200]);
        let kk = CameraIntrinsics::new(30.0, 30.0, 32.0, 24.0, 64, 48).unwrap();
        let out = undistort_image(&img, &kk, &DistortionCoefficients::radial(0.5, 0.0, 0.0));
        assert_eq!(out.get(0, 0), [0, 0, 0]);
        assert_eq!(out.get(32, 24), [200, 200, 200]);
    }
}
