use std::io::Cursor;
use std::path::Path;

use image::{ImageEncoder, RgbImage};

use super::create_parent;
use crate::error::{Error, Result};
use crate::geometry::Image;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ImageFormat {
    /// Binary PPM (P6).
    Ppm,
    Png,
}

impl ImageFormat {
    pub fn from_path(path: &Path) -> Result<Self> {
        match path
            .extension()
            .and_then(|e| e.to_str())
            .map(str::to_ascii_lowercase)
            .as_deref()
        {
            Some("ppm") | Some("pnm") => Ok(ImageFormat::Ppm),
            Some("png") => Ok(ImageFormat::Png),
            _ => Err(Error::format(path, "expected a .ppm or .png image")),
        }
    }

    pub fn extension(self) -> &'static str {
        match self {
            ImageFormat::Ppm => "ppm",
            ImageFormat::Png => "png",
        }
    }
}

pub fn encode_image(img: &Image, format: ImageFormat) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    let (w, h) = (img.width, img.height);
    let result = match format {
        ImageFormat::Ppm => image::codecs::pnm::PnmEncoder::new(&mut out)
            .with_subtype(image::codecs::pnm::PnmSubtype::Pixmap(
                image::codecs::pnm::SampleEncoding::Binary,
            ))
            .write_image(&img.pixels, w, h, image::ExtendedColorType::Rgb8),
        ImageFormat::Png => {
            image::codecs::png::PngEncoder::new(&mut out).write_image(&img.pixels, w, h, image::ExtendedColorType::Rgb8)
        }
    };
    result.map_err(|e| Error::format("<image>", e.to_string()))?;
    Ok(out)
}

/// Decodes PPM or PNG bytes into an RGB frame; other colour types are
/// converted.
pub fn decode_image(bytes: &[u8]) -> Result<Image> {
    let decoded = image::ImageReader::new(Cursor::new(bytes))
        .with_guessed_format()
        .map_err(|e| Error::format("<image>", e.to_string()))?
        .decode()
        .map_err(|e| Error::format("<image>", e.to_string()))?;
    let rgb: RgbImage = decoded.into_rgb8();
    let (w, h) = rgb.dimensions();
    Image::new(w, h, rgb.into_raw())
}

/// Loads a frame; timestamp and camera id are left for the caller.
pub fn load_image(path: impl AsRef<Path>) -> Result<Image> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_image(&bytes).map_err(|e| match e {
        Error::Format { message, .. } => Error::format(path, message),
        other => other,
    })
}

/// Writes a frame in the format named by the extension.
pub fn save_image(path: impl AsRef<Path>, img: &Image) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_image(img, ImageFormat::from_path(path)?)?;
    create_parent(path)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}
