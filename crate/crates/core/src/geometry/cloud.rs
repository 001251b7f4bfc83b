use nalgebra::Point3;

use super::RigidTransform;
use crate::error::{Error, Result};

/// A timestamped LiDAR (or derived) point set in metres.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PointCloud {
    pub points: Vec<Point3<f64>>,
    /// Nanoseconds since the epoch of the shared time base.
    pub timestamp_ns: i64,
    pub intensity: Option<Vec<f32>>,
    pub colors: Option<Vec<[u8; 3]>>,
}

impl PointCloud {
    pub fn from_points(points: Vec<Point3<f64>>) -> Self {
        Self {
            points,
            ..Self::default()
        }
    }

    pub fn with_timestamp(mut self, timestamp_ns: i64) -> Self {
        self.timestamp_ns = timestamp_ns;
        self
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(bad) = self
            .points
            .iter()
            .position(|p| !(p.x.is_finite() && p.y.is_finite() && p.z.is_finite()))
        {
            return Err(Error::invalid(format!("point {bad} has non-finite coordinates")));
        }
        let n = self.points.len();
        if self.intensity.as_ref().is_some_and(|v| v.len() != n) {
            return Err(Error::invalid("intensity attribute length differs from point count"));
        }
        if self.colors.as_ref().is_some_and(|v| v.len() != n) {
            return Err(Error::invalid("colour attribute length differs from point count"));
        }
        Ok(())
    }

    /// Applies `t` to every point; timestamp and attributes are carried over.
    pub fn transformed(&self, t: &RigidTransform) -> PointCloud {
        PointCloud {
            points: self.points.iter().map(|p| t.apply(p)).collect(),
            timestamp_ns: self.timestamp_ns,
            intensity: self.intensity.clone(),
            colors: self.colors.clone(),
        }
    }

    /// Keeps the points at `indices`, with their attributes.
    pub fn select(&self, indices: &[usize]) -> PointCloud {
        PointCloud {
            points: indices.iter().map(|&i| self.points[i]).collect(),
            timestamp_ns: self.timestamp_ns,
            intensity: self.intensity.as_ref().map(|v| indices.iter().map(|&i| v[i]).collect()),
            colors: self.colors.as_ref().map(|v| indices.iter().map(|&i| v[i]).collect()),
        }
    }

    /// Uniformly scales coordinates about the origin.
    pub fn scaled(&self, s: f64) -> PointCloud {
        let mut out = self.clone();
        for p in &mut out.points {
            p.coords *= s;
        }
        out
    }

    pub fn centroid(&self) -> Option<Point3<f64>> {
        centroid(&self.points)
    }
}

pub fn centroid(points: &[Point3<f64>]) -> Option<Point3<f64>> {
    if points.is_empty() {
        return None;
    }
    let sum = points.iter().fold(nalgebra::Vector3::zeros(), |acc, p| acc + p.coords);
    Some(Point3::from(sum / points.len() as f64))
}

/// Rigidly transforms a cloud (`R·p + T` for every point).
pub fn transform_points(t: &RigidTransform, cloud: &PointCloud) -> PointCloud {
    cloud.transformed(t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Vector3;
    use proptest::prelude::*;

    #[test]
    fn identity_leaves_cloud_unchanged() {
        let c = PointCloud::from_points(vec![Point3::new(1.0, 2.0, 3.0)]).with_timestamp(7);
        assert_eq!(transform_points(&RigidTransform::identity(), &c), c);
    }

    #[test]
    fn pure_translation() {
        let c = PointCloud::from_points(vec![Point3::origin()]);
        let out = transform_points(&RigidTransform::from_translation(Vector3::new(0.0, 0.0, 5.0)), &c);
        assert_eq!(out.points[0], Point3::new(0.0, 0.0, 5.0));
    }

    #[test]
    fn rotation_about_z() {
        let c = PointCloud::from_points(vec![Point3::new(1.0, 0.0, 0.0)]);
        let out = transform_points(&RigidTransform::rot_z(std::f64::consts::FRAC_PI_2), &c);
        assert!((out.points[0] - Point3::new(0.0, 1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn attributes_and_timestamp_preserved() {
        let mut c = PointCloud::from_points(vec![Point3::new(1.0, 0.0, 0.0); 2]).with_timestamp(42);
        c.intensity = Some(vec![0.5, 0.25]);
        c.colors = Some(vec![[1, 2, 3], [4, 5, 6]]);
        let out = c.transformed(&RigidTransform::rot_z(0.3));
        assert_eq!(out.timestamp_ns, 42);
        assert_eq!(out.intensity, c.intensity);
        assert_eq!(out.colors, c.colors);
    }

    #[test]
    fn validate_rejects_bad_attributes() {
        let mut c = PointCloud::from_points(vec![Point3::origin()]);
        c.colors = Some(vec![]);
        assert!(c.validate().is_err());
        let c = PointCloud::from_points(vec![Point3::new(f64::NAN, 0.0, 0.0)]);
        assert!(c.validate().is_err());
    }

    fn arb_transform() -> impl Strategy<Value = RigidTransform> {
        (
            prop::array::uniform3(-3.0..3.0f64),
            prop::array::uniform3(-10.0..10.0f64),
        )
            .prop_map(|(w, t)| RigidTransform::from_scaled_axis(Vector3::from(w), Vector3::from(t)))
    }

    proptest! {
        #[test]
        fn transforms_are_isometries(
            t in arb_transform(),
            pts in prop::collection::vec(prop::array::uniform3(-50.0..50.0f64), 2..20),
        ) {
            let c = PointCloud::from_points(pts.iter().map(|p| Point3::from(*p)).collect());
            let out = c.transformed(&t);
            for i in 0..c.len() {
                for j in 0..c.len() {
                    let before = (c.points[i] - c.points[j]).norm();
                    let after = (out.points[i] - out.points[j]).norm();
                    prop_assert!((before - after).abs() < 1e-9);
                }
            }
        }

        #[test]
        fn compose_is_associative(a in arb_transform(), b in arb_transform(), c in arb_transform()) {
            let left = a.compose(&b).compose(&c).to_matrix4();
            let right = a.compose(&b.compose(&c)).to_matrix4();
            prop_assert!((left - right).abs().max() < 1e-9);
        }

        #[test]
        fn inverse_cancels(t in arb_transform()) {
            let m = t.compose(&t.inverse()).to_matrix4();
            prop_assert!((m - nalgebra::Matrix4::identity()).abs().max() < 1e-9);
        }
    }
}
