use nalgebra::{DMatrix, Matrix2x3, Matrix3, Point2, Point3, Vector2, Vector3};

use super::Correspondence;
use crate::error::{Error, Result};
use crate::geometry::{CameraIntrinsics, RigidTransform};

/// Smallest ray angle accepted for triangulation.
const MIN_ANGLE_RAD: f64 = 0.1 * std::f64::consts::PI / 180.0;

/// Linear triangulation from normalised image coordinates.
pub(crate) fn dlt_normalized(views: &[(&RigidTransform, (f64, f64))]) -> Option<Point3<f64>> {
    let rows = (2 * views.len()).max(4);
    let mut a = DMatrix::<f64>::zeros(rows, 4);
    for (v, (pose, (x, y))) in views.iter().enumerate() {
        let r = pose.rotation();
        let t = pose.translation();
        for c in 0..3 {
            a[(2 * v, c)] = x * r[(2, c)] - r[(0, c)];
            a[(2 * v + 1, c)] = y * r[(2, c)] - r[(1, c)];
        }
        a[(2 * v, 3)] = x * t[2] - t[0];
        a[(2 * v + 1, 3)] = y * t[2] - t[1];
    }
    let svd = a.svd(false, true);
    let v_t = svd.v_t?;
    let (i, _) = svd.singular_values.argmin();
    let h = v_t.row(i);
    if h[3].abs() < 1e-14 {
        return None;
    }
    let p = Point3::new(h[0] / h[3], h[1] / h[3], h[2] / h[3]);
    p.coords.iter().all(|v| v.is_finite()).then_some(p)
}

/// Pixel projection and its Jacobian with respect to the camera-frame point.
pub(crate) fn project_with_jacobian(k: &CameraIntrinsics, pc: &Vector3<f64>) -> (Vector2<f64>, Matrix2x3<f64>) {
    let (x, y, z) = (pc.x, pc.y, pc.z);
    let iz = 1.0 / z;
    let (u, v) = k.to_pixel(x * iz, y * iz);
    let j = Matrix2x3::new(
        k.fx * iz,
        k.skew * iz,
        -(k.fx * x + k.skew * y) * iz * iz,
        0.0,
        k.fy * iz,
        -k.fy * y * iz * iz,
    );
    (Vector2::new(u, v), j)
}

/// Triangulates one point seen from several posed views: linear
/// initialisation, then Gauss–Newton on the pixel reprojection error.
pub fn triangulate_views(views: &[(RigidTransform, Point2<f64>)], k: &CameraIntrinsics) -> Result<Point3<f64>> {
    if views.len() < 2 {
        return Err(Error::invalid("triangulation needs at least two views"));
    }
    let centres: Vec<Vector3<f64>> = views
        .iter()
        .map(|(p, _)| -(p.rotation().transpose() * p.translation()))
        .collect();
    let baseline = centres
        .iter()
        .skip(1)
        .map(|c| (c - centres[0]).norm())
        .fold(0.0, f64::max);
    if baseline < 1e-9 {
        return Err(Error::IllConditioned("camera centres coincide".into()));
    }
    let normalized: Vec<_> = views.iter().map(|(p, px)| (p, k.to_normalized(px.x, px.y))).collect();
    let mut x = dlt_normalized(&normalized)
        .ok_or_else(|| Error::IllConditioned("linear triangulation has no finite solution".into()))?;

    let rays: Vec<Vector3<f64>> = views
        .iter()
        .map(|(p, px)| p.rotation().transpose() * k.ray(px).normalize())
        .collect();
    let mut max_angle: f64 = 0.0;
    for i in 0..rays.len() {
        for j in i + 1..rays.len() {
            max_angle = max_angle.max(rays[i].angle(&rays[j]));
        }
    }
    if max_angle < MIN_ANGLE_RAD {
        return Err(Error::IllConditioned(format!(
            "triangulation angle {:.4}° below 0.1°",
            max_angle.to_degrees()
        )));
    }

    for _ in 0..20 {
        let mut h = Matrix3::zeros();
        let mut g = Vector3::zeros();
        for (pose, px) in views {
            let pc = pose.rotation() * x.coords + pose.translation();
            if pc.z <= 0.0 {
                break;
            }
            let (proj, jp) = project_with_jacobian(k, &pc);
            let j = jp * pose.rotation();
            let r = proj - px.coords;
            h += j.transpose() * j;
            g += j.transpose() * r;
        }
        let Some(step) = h.cholesky().map(|c| c.solve(&-g)) else {
            break;
        };
        x += step;
        if step.norm() <= 1e-14 * (1.0 + x.coords.norm()) {
            break;
        }
    }
    for (i, (pose, _)) in views.iter().enumerate() {
        if pose.apply(&x).z <= 0.0 {
            return Err(Error::BehindCamera(format!("triangulated point lies behind view {i}")));
        }
    }
    Ok(x)
}

/// Two-view triangulation of a correspondence.
pub fn triangulate(
    corr: &Correspondence,
    pose_a: &RigidTransform,
    pose_b: &RigidTransform,
    k: &CameraIntrinsics,
) -> Result<Point3<f64>> {
    triangulate_views(&[(*pose_a, corr.a), (*pose_b, corr.b)], k)
}
