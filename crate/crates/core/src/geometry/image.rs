use crate::error::{Error, Result};

/// BT.601 luma weights.
pub const LUMA_WEIGHTS: [f64; 3] = [0.299, 0.587, 0.114];

/// A timestamped row-major RGB8 frame from one camera.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Image {
    pub width: u32,
    pub height: u32,
    pub pixels: Vec<u8>,
    pub timestamp_ns: i64,
    pub camera_id: u8,
}

impl Image {
    pub fn new(width: u32, height: u32, pixels: Vec<u8>) -> Result<Self> {
        let expected = width as usize * height as usize * 3;
        if pixels.len() != expected {
            return Err(Error::invalid(format!(
                "pixel buffer holds {} bytes, {width}x{height} RGB needs {expected}",
                pixels.len()
            )));
        }
        Ok(Self {
            width,
            height,
            pixels,
            timestamp_ns: 0,
            camera_id: 0,
        })
    }

    pub fn filled(width: u32, height: u32, rgb: [u8; 3]) -> Self {
        let pixels = rgb
            .iter()
            .copied()
            .cycle()
            .take(width as usize * height as usize * 3)
            .collect();
        Self {
            width,
            height,
            pixels,
            timestamp_ns: 0,
            camera_id: 0,
        }
    }

    /// Builds an image by evaluating `f(x, y)` for every pixel.
    pub fn from_fn(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> [u8; 3]) -> Self {
        let mut pixels = Vec::with_capacity(width as usize * height as usize * 3);
        for y in 0..height {
            for x in 0..width {
                pixels.extend_from_slice(&f(x, y));
            }
        }
        Self {
            width,
            height,
            pixels,
            timestamp_ns: 0,
            camera_id: 0,
        }
    }

    pub fn with_meta(mut self, timestamp_ns: i64, camera_id: u8) -> Self {
        self.timestamp_ns = timestamp_ns;
        self.camera_id = camera_id;
        self
    }

    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }

    pub fn is_empty(&self) -> bool {
        self.pixel_count() == 0
    }

    pub fn same_size(&self, other: &Image) -> bool {
        self.width == other.width && self.height == other.height
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> [u8; 3] {
        let i = (y as usize * self.width as usize + x as usize) * 3;
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    #[inline]
    pub fn put(&mut self, x: u32, y: u32, rgb: [u8; 3]) {
        let i = (y as usize * self.width as usize + x as usize) * 3;
        self.pixels[i..i + 3].copy_from_slice(&rgb);
    }

    /// Per-pixel BT.601 luma on the 0..255 scale.
    pub fn luma(&self) -> Vec<f64> {
        self.pixels.chunks_exact(3).map(luma_of).collect()
    }

    /// Same pixels, same metadata, different buffer.
    pub fn with_pixels(&self, pixels: Vec<u8>) -> Image {
        debug_assert_eq!(pixels.len(), self.pixels.len());
        Image {
            width: self.width,
            height: self.height,
            pixels,
            timestamp_ns: self.timestamp_ns,
            camera_id: self.camera_id,
        }
    }
}

#[inline]
pub fn luma_of(rgb: &[u8]) -> f64 {
    LUMA_WEIGHTS[0] * rgb[0] as f64 + LUMA_WEIGHTS[1] * rgb[1] as f64 + LUMA_WEIGHTS[2] * rgb[2] as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn buffer_length_checked() {
        assert!(Image::new(2, 2, vec![0; 12]).is_ok());
        assert!(Image::new(2, 2, vec![0; 11]).is_err());
    }

    #[test]
    fn get_put_round_trip() {
        let mut img = Image::filled(3, 2, [1, 2, 3]);
        img.put(2, 1, [9, 8, 7]);
        assert_eq!(img.get(2, 1), [9, 8, 7]);
        assert_eq!(img.get(0, 0), [1, 2, 3]);
    }

    #[test]
    fn luma_of_white_is_255() {
        assert!((luma_of(&[255, 255, 255]) - 255.0).abs() < 1e-9);
    }
}
