use nalgebra::{Matrix3, Point2, Point3, Vector3};
use serde::{Deserialize, Serialize};

use super::{PointCloud, RigidTransform};
use crate::error::{Error, Result};

/// Pinhole intrinsics with optional pixel-axis skew.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    #[serde(default)]
    pub skew: f64,
    pub width: u32,
    pub height: u32,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: u32, height: u32) -> Result<Self> {
        let k = Self {
            fx,
            fy,
            cx,
            cy,
            skew: 0.0,
            width,
            height,
        };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.fx, self.fy, self.cx, self.cy, self.skew]
            .iter()
            .all(|v| v.is_finite());
        if !finite || self.fx <= 0.0 || self.fy <= 0.0 {
            return Err(Error::invalid(format!(
                "focal lengths must be positive and finite (fx={}, fy={})",
                self.fx, self.fy
            )));
        }
        if !(0.0..self.width as f64).contains(&self.cx) || !(0.0..self.height as f64).contains(&self.cy) {
            return Err(Error::invalid(format!(
                "principal point ({}, {}) outside {}x{} image",
                self.cx, self.cy, self.width, self.height
            )));
        }
        Ok(())
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        Matrix3::new(self.fx, self.skew, self.cx, 0.0, self.fy, self.cy, 0.0, 0.0, 1.0)
    }

    /// Pixel coordinates of a normalised image point `(x/z, y/z)`.
    #[inline(always)]
    pub fn to_pixel(&self, xn: f64, yn: f64) -> (f64, f64) {
        (self.fx * xn + self.skew * yn + self.cx, self.fy * yn + self.cy)
    }

    /// Normalised image point of a pixel (inverse of [`Self::to_pixel`]).
    #[inline]
    pub fn to_normalized(&self, u: f64, v: f64) -> (f64, f64) {
        let yn = (v - self.cy) / self.fy;
        let xn = (u - self.cx - self.skew * yn) / self.fx;
        (xn, yn)
    }

    /// Projects a camera-frame point; `None` when the point is not in front
    /// of the camera (`z <= 0`).
    #[inline(always)]
    pub fn project_xyz(&self, x: f64, y: f64, z: f64) -> Option<(f64, f64)> {
        if z > 0.0 {
            Some(self.to_pixel(x / z, y / z))
        } else {
            None
        }
    }

    pub fn project(&self, p: &Point3<f64>) -> Option<Point2<f64>> {
        self.project_xyz(p.x, p.y, p.z).map(|(u, v)| Point2::new(u, v))
    }

    /// Back-projects a pixel to the camera-frame point at depth `z`.
    pub fn unproject(&self, pixel: &Point2<f64>, z: f64) -> Point3<f64> {
        let (xn, yn) = self.to_normalized(pixel.x, pixel.y);
        Point3::new(xn * z, yn * z, z)
    }

    /// Camera-frame ray direction (not normalised, `z = 1`) through a pixel.
    pub fn ray(&self, pixel: &Point2<f64>) -> Vector3<f64> {
        let (xn, yn) = self.to_normalized(pixel.x, pixel.y);
        Vector3::new(xn, yn, 1.0)
    }

    pub fn contains(&self, u: f64, v: f64) -> bool {
        u >= 0.0 && u < self.width as f64 && v >= 0.0 && v < self.height as f64
    }
}

/// Brown–Conrady lens model: three radial and two tangential coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct DistortionCoefficients {
    pub k1: f64,
    pub k2: f64,
    pub p1: f64,
    pub p2: f64,
    pub k3: f64,
}

impl DistortionCoefficients {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn radial(k1: f64, k2: f64, k3: f64) -> Self {
        Self {
            k1,
            k2,
            k3,
            ..Self::default()
        }
    }

    pub fn is_zero(&self) -> bool {
        [self.k1, self.k2, self.k3, self.p1, self.p2].iter().all(|v| *v == 0.0)
    }

    pub fn validate(&self) -> Result<()> {
        if [self.k1, self.k2, self.k3, self.p1, self.p2]
            .iter()
            .all(|v| v.is_finite())
        {
            Ok(())
        } else {
            Err(Error::invalid("distortion coefficients must be finite"))
        }
    }

    /// Maps an ideal normalised point to its distorted normalised position.
    #[inline]
    pub fn distort(&self, x: f64, y: f64) -> (f64, f64) {
        let r2 = x * x + y * y;
        let radial = 1.0 + r2 * (self.k1 + r2 * (self.k2 + r2 * self.k3));
        let xy = x * y;
        (
            x * radial + 2.0 * self.p1 * xy + self.p2 * (r2 + 2.0 * x * x),
            y * radial + self.p1 * (r2 + 2.0 * y * y) + 2.0 * self.p2 * xy,
        )
    }

    /// Inverts [`Self::distort`] by fixed-point iteration followed by Newton
    /// polishing. Converges for the moderate distortion of rectilinear lenses.
    pub fn undistort(&self, xd: f64, yd: f64) -> (f64, f64) {
        if self.is_zero() {
            return (xd, yd);
        }
        let (mut x, mut y) = (xd, yd);
        for _ in 0..20 {
            let r2 = x * x + y * y;
            let radial = 1.0 + r2 * (self.k1 + r2 * (self.k2 + r2 * self.k3));
            let dx = 2.0 * self.p1 * x * y + self.p2 * (r2 + 2.0 * x * x);
            let dy = self.p1 * (r2 + 2.0 * y * y) + 2.0 * self.p2 * x * y;
            x = (xd - dx) / radial;
            y = (yd - dy) / radial;
        }
        // Newton steps with a finite-difference Jacobian.
        for _ in 0..5 {
            let (fx, fy) = self.distort(x, y);
            let (ex, ey) = (fx - xd, fy - yd);
            if ex.abs().max(ey.abs()) < 1e-15 {
                break;
            }
            let h = 1e-7;
            let (ax, ay) = self.distort(x + h, y);
            let (bx, by) = self.distort(x, y + h);
            let (j00, j10) = ((ax - fx) / h, (ay - fy) / h);
            let (j01, j11) = ((bx - fx) / h, (by - fy) / h);
            let det = j00 * j11 - j01 * j10;
            if det.abs() < 1e-12 {
                break;
            }
            x -= (j11 * ex - j01 * ey) / det;
            y -= (-j10 * ex + j00 * ey) / det;
        }
        (x, y)
    }
}

/// RMS pixel distance between projected points and their observations.
///
/// `transform` maps the point frame into the camera frame.
pub fn reprojection_error(
    k: &CameraIntrinsics,
    transform: &RigidTransform,
    points: &PointCloud,
    observed: &[Point2<f64>],
) -> Result<f64> {
    if points.is_empty() || points.len() != observed.len() {
        return Err(Error::invalid(format!(
            "reprojection needs equal, non-zero counts (points {}, observations {})",
            points.len(),
            observed.len()
        )));
    }
    let mut sum = 0.0;
    for (p, obs) in points.points.iter().zip(observed) {
        let pc = transform.apply(p);
        let proj = k
            .project(&pc)
            .ok_or_else(|| Error::invalid("point behind the camera in reprojection"))?;
        sum += (proj - obs).norm_squared();
    }
    Ok((sum / observed.len() as f64).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn k() -> CameraIntrinsics {
        CameraIntrinsics::new(500.0, 500.0, 640.0, 360.0, 1280, 720).unwrap()
    }

    #[test]
    fn optical_axis_hits_principal_point() {
        let p = k().project(&Point3::new(0.0, 0.0, 1.0)).unwrap();
        assert_eq!((p.x, p.y), (640.0, 360.0));
    }

    #[test]
    fn off_axis_projection() {
        // u = 500 * 1/2 + 640 = 890
        let p = k().project(&Point3::new(1.0, 0.0, 2.0)).unwrap();
        assert!((p.x - 890.0).abs() < 1e-12 && (p.y - 360.0).abs() < 1e-12);
    }

    #[test]
    fn negative_depth_rejected() {
        assert!(k().project(&Point3::new(0.0, 0.0, -1.0)).is_none());
        assert!(k().project(&Point3::new(0.0, 0.0, 0.0)).is_none());
    }

    #[test]
    fn skew_enters_u_only() {
        let mut kk = k();
        kk.skew = 2.0;
        let p = kk.project(&Point3::new(0.0, 1.0, 1.0)).unwrap();
        assert!((p.x - 642.0).abs() < 1e-12 && (p.y - 860.0).abs() < 1e-12);
        let back = kk.unproject(&p, 1.0);
        assert!((back - Point3::new(0.0, 1.0, 1.0)).norm() < 1e-12);
    }

    #[test]
    fn invalid_intrinsics_rejected() {
        assert!(CameraIntrinsics::new(0.0, 500.0, 640.0, 360.0, 1280, 720).is_err());
        assert!(CameraIntrinsics::new(500.0, 500.0, 1280.0, 360.0, 1280, 720).is_err());
    }

    #[test]
    fn undistort_inverts_distort() {
        let d = DistortionCoefficients {
            k1: -0.2,
            k2: 0.05,
            p1: 0.001,
            p2: -0.0005,
            k3: 0.0,
        };
        for &(x, y) in &[(0.0, 0.0), (0.3, -0.2), (-0.6, 0.4), (0.7, 0.5)] {
            let (xd, yd) = d.distort(x, y);
            let (xu, yu) = d.undistort(xd, yd);
            assert!((xu - x).abs() < 1e-12 && (yu - y).abs() < 1e-12, "{x} {y}");
        }
    }

    #[test]
    fn reprojection_error_cases() {
        let cloud = PointCloud::from_points(vec![Point3::new(0.1, 0.2, 2.0), Point3::new(-0.3, 0.1, 3.0)]);
        let t = RigidTransform::identity();
        let exact: Vec<_> = cloud.points.iter().map(|p| k().project(p).unwrap()).collect();
        assert_eq!(reprojection_error(&k(), &t, &cloud, &exact).unwrap(), 0.0);

        let shifted: Vec<_> = exact.iter().map(|p| Point2::new(p.x + 3.0, p.y + 4.0)).collect();
        assert!((reprojection_error(&k(), &t, &cloud, &shifted).unwrap() - 5.0).abs() < 1e-9);

        assert!(reprojection_error(&k(), &t, &cloud, &exact[..1]).is_err());
        assert!(reprojection_error(&k(), &t, &PointCloud::default(), &[]).is_err());
    }
}
