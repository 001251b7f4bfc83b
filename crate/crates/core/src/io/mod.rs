//! On-disk formats: PLY point clouds, PPM/PNG frames and the dataset
//! directory layout shared by the simulator and the command line.

mod dataset;
mod ply;
mod raster;

pub use dataset::{camera_dir_name, DatasetIndex, StampedPath, CLOUD_EXT, LIDAR_DIR, TRUTH_DIR};
pub use ply::{
    load_cloud, load_colourised, read_cloud_ply, read_colourised_ply, save_cloud, save_colourised, write_cloud_ply,
    write_colourised_ply,
};
pub use raster::{decode_image, encode_image, load_image, save_image, ImageFormat};

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};

/// Pretty JSON with a trailing newline.
pub fn save_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let path = path.as_ref();
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::format(path, e.to_string()))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn load_json<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))
}

pub(crate) fn create_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e)),
        _ => Ok(()),
    }
}
