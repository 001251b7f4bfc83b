use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

pub const LIDAR_DIR: &str = "lidar";
/// Simulator sidecar clouds carrying ground-truth surface colours.
pub const TRUTH_DIR: &str = "truth";
pub const CLOUD_EXT: &str = "ply";

pub fn camera_dir_name(id: u8) -> String {
    format!("cam{id}")
}

/// A file whose stem is its timestamp in nanoseconds.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct StampedPath {
    pub timestamp_ns: i64,
    pub path: PathBuf,
}

/// Directory layout `lidar/<t_ns>.ply` and `cam<k>/<t_ns>.{ppm,png}`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DatasetIndex {
    pub root: PathBuf,
    pub lidar: Vec<StampedPath>,
    pub cameras: BTreeMap<u8, Vec<StampedPath>>,
    /// Entries whose names could not be read as timestamps.
    pub skipped: Vec<PathBuf>,
}

impl DatasetIndex {
    /// Indexes a dataset; a missing root is a configuration error, missing
    /// subdirectories are simply empty.
    pub fn scan(root: impl AsRef<Path>) -> Result<Self> {
        let root = root.as_ref();
        if !root.is_dir() {
            return Err(Error::Configuration(format!("{} is not a directory", root.display())));
        }
        let mut index = DatasetIndex {
            root: root.to_path_buf(),
            ..Self::default()
        };
        let entries = std::fs::read_dir(root).map_err(|e| Error::io(root, e))?;
        let mut dirs: Vec<PathBuf> = Vec::new();
        for entry in entries {
            let entry = entry.map_err(|e| Error::io(root, e))?;
            if entry.path().is_dir() {
                dirs.push(entry.path());
            }
        }
        dirs.sort();
        for dir in dirs {
            let name = dir.file_name().and_then(|n| n.to_str()).unwrap_or_default().to_string();
            if name == LIDAR_DIR {
                index.lidar = stamped_files(&dir, &[CLOUD_EXT], &mut index.skipped)?;
            } else if let Some(id) = name.strip_prefix("cam").and_then(|k| k.parse::<u8>().ok()) {
                let frames = stamped_files(&dir, &["ppm", "png"], &mut index.skipped)?;
                index.cameras.insert(id, frames);
            }
        }
        Ok(index)
    }

    pub fn camera_ids(&self) -> Vec<u8> {
        self.cameras.keys().copied().collect()
    }

    pub fn lidar_timestamps(&self) -> Vec<i64> {
        self.lidar.iter().map(|s| s.timestamp_ns).collect()
    }

    pub fn camera_timestamps(&self, id: u8) -> Vec<i64> {
        self.cameras
            .get(&id)
            .map(|v| v.iter().map(|s| s.timestamp_ns).collect())
            .unwrap_or_default()
    }

    pub fn lidar_path(root: &Path, timestamp_ns: i64) -> PathBuf {
        root.join(LIDAR_DIR).join(format!("{timestamp_ns}.{CLOUD_EXT}"))
    }

    pub fn truth_path(root: &Path, timestamp_ns: i64) -> PathBuf {
        root.join(TRUTH_DIR).join(format!("{timestamp_ns}.{CLOUD_EXT}"))
    }

    pub fn camera_path(root: &Path, id: u8, timestamp_ns: i64, extension: &str) -> PathBuf {
        root.join(camera_dir_name(id))
            .join(format!("{timestamp_ns}.{extension}"))
    }
}

fn stamped_files(dir: &Path, extensions: &[&str], skipped: &mut Vec<PathBuf>) -> Result<Vec<StampedPath>> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if !path.is_file() {
            continue;
        }
        let ext_ok = path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| extensions.iter().any(|x| x.eq_ignore_ascii_case(e)));
        let stamp = path
            .file_stem()
            .and_then(|s| s.to_str())
            .and_then(|s| s.parse::<i64>().ok());
        match (ext_ok, stamp) {
            (true, Some(timestamp_ns)) => out.push(StampedPath { timestamp_ns, path }),
            _ => {
                log::warn!("ignoring {}", path.display());
                skipped.push(path);
            }
        }
    }
    out.sort();
    Ok(out)
}
