//! The calibration bundle: one JSON document holding every camera's model.

use std::path::Path;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::colorcal::ColorCoefficients;
use crate::coverage::{CameraLayout, LayoutCamera};
use crate::error::{Error, Result};
use crate::geometry::{CameraIntrinsics, DistortionCoefficients, RigidTransform};

/// Camera identifier; 255 is reserved for "no camera".
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CameraId(pub u8);

impl CameraId {
    pub const NONE: u8 = 255;
}

impl std::fmt::Display for CameraId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "cam{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraModel {
    pub id: CameraId,
    pub intrinsics: CameraIntrinsics,
    #[serde(default)]
    pub distortion: DistortionCoefficients,
    /// LiDAR → camera.
    #[serde(rename = "extrinsic_4x4_row_major")]
    pub extrinsic: RigidTransform,
    #[serde(default, rename = "color_coefficients")]
    pub color: ColorCoefficients,
    pub layout: LayoutCamera,
}

impl CameraModel {
    /// Camera on a horizontal ring around the LiDAR: mounted `offset_m` out
    /// along `azimuth_deg` (counter-clockwise from +x), looking outwards
    /// with image rows running downwards.
    pub fn ring(
        id: CameraId,
        azimuth_deg: f64,
        offset_m: f64,
        half_fov_deg: f64,
        intrinsics: CameraIntrinsics,
        distortion: DistortionCoefficients,
    ) -> Self {
        let (s, c) = azimuth_deg.to_radians().sin_cos();
        let rotation = Matrix3::new(s, -c, 0.0, 0.0, 0.0, -1.0, c, s, 0.0);
        let centre = Vector3::new(c, s, 0.0) * offset_m;
        Self {
            id,
            intrinsics,
            distortion,
            extrinsic: RigidTransform::from_approx(&rotation, -(rotation * centre)),
            color: ColorCoefficients::IDENTITY,
            layout: LayoutCamera::new(azimuth_deg, offset_m, half_fov_deg),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationBundle {
    pub cameras: Vec<CameraModel>,
    /// Free-form output of the calibration steps.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostics: Option<serde_json::Value>,
}

impl CalibrationBundle {
    pub fn new(cameras: Vec<CameraModel>) -> Result<Self> {
        let bundle = Self {
            cameras,
            diagnostics: None,
        };
        bundle.validate()?;
        Ok(bundle)
    }

    pub fn validate(&self) -> Result<()> {
        if self.cameras.is_empty() {
            return Err(Error::Configuration("calibration bundle has no cameras".into()));
        }
        for (i, cam) in self.cameras.iter().enumerate() {
            if cam.id.0 == CameraId::NONE {
                return Err(Error::Configuration("camera id 255 is reserved".into()));
            }
            if self.cameras[..i].iter().any(|c| c.id == cam.id) {
                return Err(Error::Configuration(format!("duplicate camera id {}", cam.id.0)));
            }
            cam.intrinsics
                .validate()
                .and_then(|_| cam.distortion.validate())
                .and_then(|_| cam.color.validate())
                .map_err(|e| Error::Configuration(format!("{}: {e}", cam.id)))?;
        }
        self.layout().map(|_| ())
    }

    pub fn camera(&self, id: CameraId) -> Option<&CameraModel> {
        self.cameras.iter().find(|c| c.id == id)
    }

    pub fn layout(&self) -> Result<CameraLayout> {
        CameraLayout::new(self.cameras.iter().map(|c| c.layout).collect())
            .map_err(|e| Error::Configuration(format!("camera layout: {e}")))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let bundle: Self =
            serde_json::from_str(text).map_err(|e| Error::Configuration(format!("calibration bundle: {e}")))?;
        bundle.validate()?;
        Ok(bundle)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("bundle serialises")
    }

    /// Reads and validates a bundle; a missing or invalid file is a
    /// configuration error.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::Configuration(format!("{}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| Error::Configuration(format!("{}: {e}", path.display())))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use nalgebra::Point3;

    pub(crate) fn sample_bundle() -> CalibrationBundle {
        let cameras = (0..4u8)
            .map(|i| {
                let az = f64::from(i) * 90.0;
                CameraModel {
                    id: CameraId(i),
                    intrinsics: CameraIntrinsics::new(500.0, 500.0, 640.0, 360.0, 1280, 720).unwrap(),
                    distortion: DistortionCoefficients::radial(-0.05, 0.0, 0.0),
                    extrinsic: RigidTransform::from_scaled_axis(
                        Vector3::new(0.1, -0.2, az.to_radians()),
                        Vector3::new(0.1, 0.0, -0.05 * f64::from(i)),
                    ),
                    color: ColorCoefficients::IDENTITY,
                    layout: LayoutCamera::new(az, 0.1, 50.0),
                }
            })
            .collect();
        CalibrationBundle::new(cameras).unwrap()
    }

    #[test]
    fn ring_camera_looks_outwards() {
        let k = CameraIntrinsics::new(500.0, 500.0, 640.0, 360.0, 1280, 720).unwrap();
        for az in [0.0, 90.0, 200.0] {
            let cam = CameraModel::ring(CameraId(0), az, 0.1, 50.0, k, DistortionCoefficients::none());
            let (s, c) = f64::to_radians(az).sin_cos();
            let ahead = cam.extrinsic.apply(&Point3::new(2.1 * c, 2.1 * s, 0.0));
            assert!((ahead - Point3::new(0.0, 0.0, 2.0)).norm() < 1e-12);
            // Up in the world is up in the image.
            let above = cam.extrinsic.apply(&Point3::new(2.1 * c, 2.1 * s, 0.5));
            assert!(above.y < 0.0);
            // Left of the camera lands left of centre.
            let left = cam.extrinsic.apply(&Point3::new(2.1 * c - s, 2.1 * s + c, 0.0));
            assert!(left.x < 0.0);
        }
    }

    #[test]
    fn json_round_trip_preserves_transforms() {
        let bundle = sample_bundle();
        let back = CalibrationBundle::from_json(&bundle.to_json()).unwrap();
        for (a, b) in bundle.cameras.iter().zip(&back.cameras) {
            let diff = (a.extrinsic.to_matrix4() - b.extrinsic.to_matrix4()).abs().max();
            assert!(diff <= 1e-12);
            assert_eq!(a.intrinsics, b.intrinsics);
        }
    }

    #[test]
    fn json_uses_documented_field_names() {
        let v: serde_json::Value = serde_json::from_str(&sample_bundle().to_json()).unwrap();
        let cam = &v["cameras"][0];
        for key in [
            "id",
            "intrinsics",
            "distortion",
            "extrinsic_4x4_row_major",
            "color_coefficients",
            "layout",
        ] {
            assert!(cam.get(key).is_some(), "missing {key}");
        }
        assert_eq!(cam["extrinsic_4x4_row_major"].as_array().unwrap().len(), 16);
        assert!(cam["layout"].get("half_fov_deg").is_some());
    }

    #[test]
    fn invalid_bundles_are_configuration_errors() {
        let mut b = sample_bundle();
        b.cameras[1].id = CameraId(0);
        assert!(matches!(b.validate(), Err(Error::Configuration(_))));
        assert!(matches!(CalibrationBundle::new(vec![]), Err(Error::Configuration(_))));
        assert!(matches!(
            CalibrationBundle::from_json("{"),
            Err(Error::Configuration(_))
        ));
        assert!(matches!(
            CalibrationBundle::load("/nonexistent/bundle.json"),
            Err(Error::Configuration(_))
        ));
    }
}
