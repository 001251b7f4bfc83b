//! Closed-form alignment of paired point sets.

use nalgebra::{Matrix3, Point3, Vector3};

use super::RigidTransform;
use crate::error::{Error, Result};

/// Similarity `dst ≈ scale·R·src + t` in the least-squares sense.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Similarity {
    pub scale: f64,
    pub rigid: RigidTransform,
}

impl Similarity {
    pub fn apply(&self, p: &Point3<f64>) -> Point3<f64> {
        Point3::from(self.rigid.rotation() * p.coords * self.scale + self.rigid.translation())
    }
}

fn cross_covariance(src: &[Point3<f64>], dst: &[Point3<f64>]) -> Result<(Vector3<f64>, Vector3<f64>, Matrix3<f64>)> {
    if src.len() != dst.len() || src.len() < 3 {
        return Err(Error::invalid(format!(
            "alignment needs at least 3 paired points, got {} and {}",
            src.len(),
            dst.len()
        )));
    }
    let n = src.len() as f64;
    let cs = src.iter().fold(Vector3::zeros(), |a, p| a + p.coords) / n;
    let cd = dst.iter().fold(Vector3::zeros(), |a, p| a + p.coords) / n;
    let h = src.iter().zip(dst).fold(Matrix3::zeros(), |h, (s, d)| {
        h + (s.coords - cs) * (d.coords - cd).transpose()
    });
    Ok((cs, cd, h))
}

fn rotation_from(h: &Matrix3<f64>) -> (Matrix3<f64>, Vector3<f64>, Matrix3<f64>) {
    let svd = h.svd(true, true);
    let (u, v_t) = (svd.u.expect("svd u"), svd.v_t.expect("svd v_t"));
    let v = v_t.transpose();
    let mut d = Matrix3::identity();
    if (v * u.transpose()).determinant() < 0.0 {
        d[(2, 2)] = -1.0;
    }
    (v * d * u.transpose(), svd.singular_values, d)
}

/// Least-squares rigid transform taking `src` onto `dst`.
pub fn kabsch(src: &[Point3<f64>], dst: &[Point3<f64>]) -> Result<RigidTransform> {
    let (cs, cd, h) = cross_covariance(src, dst)?;
    let (r, _, _) = rotation_from(&h);
    Ok(RigidTransform::from_approx(&r, cd - r * cs))
}

/// Least-squares similarity taking `src` onto `dst`.
pub fn umeyama(src: &[Point3<f64>], dst: &[Point3<f64>]) -> Result<Similarity> {
    let (cs, cd, h) = cross_covariance(src, dst)?;
    let var_src: f64 = src.iter().map(|p| (p.coords - cs).norm_squared()).sum();
    if var_src <= 0.0 {
        return Err(Error::DegenerateScale("source points coincide".into()));
    }
    let (r, s, d) = rotation_from(&h);
    let scale = (s[0] * d[(0, 0)] + s[1] * d[(1, 1)] + s[2] * d[(2, 2)]) / var_src;
    Ok(Similarity {
        scale,
        rigid: RigidTransform::from_approx(&r, cd - r * cs * scale),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn points() -> Vec<Point3<f64>> {
        vec![
            Point3::new(0.0, 0.0, 0.0),
            Point3::new(1.0, 0.0, 0.0),
            Point3::new(0.0, 2.0, 0.0),
            Point3::new(0.3, 0.1, 1.5),
            Point3::new(-1.0, 0.5, 0.2),
        ]
    }

    #[test]
    fn recovers_rigid_and_similarity() {
        let t = RigidTransform::from_scaled_axis(Vector3::new(0.3, -0.2, 1.1), Vector3::new(1.0, -2.0, 0.5));
        let src = points();
        let dst: Vec<_> = src.iter().map(|p| t.apply(p)).collect();
        let k = kabsch(&src, &dst).unwrap();
        assert!(k.rotation_angle_to(&t) < 1e-12 && k.translation_distance(&t) < 1e-12);

        let scaled: Vec<_> = src.iter().map(|p| t.apply(&(p * 2.5))).collect();
        let s = umeyama(&src, &scaled).unwrap();
        assert!((s.scale - 2.5).abs() < 1e-12);
        for (p, q) in src.iter().zip(&scaled) {
            assert!((s.apply(p) - q).norm() < 1e-12);
        }
    }

    #[test]
    fn reflections_are_never_returned() {
        let src = points();
        let dst: Vec<_> = src.iter().map(|p| Point3::new(-p.x, p.y, p.z)).collect();
        let k = kabsch(&src, &dst).unwrap();
        assert!((k.rotation().determinant() - 1.0).abs() < 1e-12);
        assert!(kabsch(&src[..2], &dst[..2]).is_err());
    }
}
