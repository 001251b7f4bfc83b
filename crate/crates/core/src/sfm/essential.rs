use nalgebra::{Matrix3, Vector3};

use super::fundamental::FundamentalMatrix;
use super::triangulate::dlt_normalized;
use super::Correspondence;
use crate::error::{Error, Result};
use crate::geometry::{CameraIntrinsics, RigidTransform};

/// Essential matrix with singular values `(σ, σ, 0)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EssentialMatrix(Matrix3<f64>);

impl EssentialMatrix {
    /// Projects `m` onto the essential manifold.
    pub fn from_matrix(m: &Matrix3<f64>) -> Self {
        let svd = m.svd(true, true);
        let (u, v_t) = (svd.u.expect("svd u"), svd.v_t.expect("svd v_t"));
        let s = svd.singular_values;
        let mut sorted = [s[0], s[1], s[2]];
        sorted.sort_by(|a, b| b.total_cmp(a));
        let sigma = 0.5 * (sorted[0] + sorted[1]);
        let d: Vector3<f64> = s.map(|v| if v == sorted[2] { 0.0 } else { sigma });
        // Guard against ties that would zero two entries.
        let d = if d.iter().filter(|v| **v == 0.0).count() == 1 {
            d
        } else {
            let (i, _) = s.argmin();
            Vector3::from_fn(|r, _| if r == i { 0.0 } else { sigma })
        };
        Self(u * Matrix3::from_diagonal(&d) * v_t)
    }

    /// `[t]×·R` for a relative pose.
    pub fn from_pose(pose: &RigidTransform) -> Self {
        Self::from_matrix(&(crate::geometry::skew(pose.translation()) * pose.rotation()))
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }
}

/// `E = Kᵀ·F·K`, projected to the essential manifold.
pub fn essential_from_fundamental(f: &FundamentalMatrix, k: &CameraIntrinsics) -> EssentialMatrix {
    let km = k.matrix();
    EssentialMatrix::from_matrix(&(km.transpose() * f.matrix() * km))
}

/// The four `(R, t)` factorisations of `E`.
fn candidates(e: &EssentialMatrix) -> [RigidTransform; 4] {
    let svd = e.0.svd(true, true);
    let (mut u, v_t) = (svd.u.expect("svd u"), svd.v_t.expect("svd v_t"));
    let mut v = v_t.transpose();
    // SVD leaves the null direction unsorted; move it to the last column.
    let (null, _) = svd.singular_values.argmin();
    if null != 2 {
        u.swap_columns(null, 2);
        v.swap_columns(null, 2);
    }
    if u.determinant() < 0.0 {
        u = -u;
    }
    if v.determinant() < 0.0 {
        v = -v;
    }
    let w = Matrix3::new(0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0);
    let r1 = u * w * v.transpose();
    let r2 = u * w.transpose() * v.transpose();
    let t: Vector3<f64> = u.column(2).normalize();
    [
        RigidTransform::from_approx(&r1, t),
        RigidTransform::from_approx(&r1, -t),
        RigidTransform::from_approx(&r2, t),
        RigidTransform::from_approx(&r2, -t),
    ]
}

/// Relative pose of view B with respect to view A (`x_B = R·x_A + t`),
/// `‖t‖ = 1`, chosen by the cheirality test over `corrs`.
pub fn decompose_essential(
    e: &EssentialMatrix,
    corrs: &[Correspondence],
    k: &CameraIntrinsics,
) -> Result<RigidTransform> {
    if corrs.is_empty() {
        return Err(Error::invalid("cheirality test needs at least one correspondence"));
    }
    let normalized: Vec<_> = corrs
        .iter()
        .map(|c| (k.to_normalized(c.a.x, c.a.y), k.to_normalized(c.b.x, c.b.y)))
        .collect();
    let identity = RigidTransform::identity();
    let mut best: Option<(usize, RigidTransform)> = None;
    for cand in candidates(e) {
        let in_front = normalized
            .iter()
            .filter(|(a, b)| {
                dlt_normalized(&[(&identity, *a), (&cand, *b)]).is_some_and(|x| x.z > 0.0 && cand.apply(&x).z > 0.0)
            })
            .count();
        if best.as_ref().is_none_or(|(n, _)| in_front > *n) {
            best = Some((in_front, cand));
        }
    }
    match best {
        Some((n, pose)) if 2 * n > corrs.len() => Ok(pose),
        _ => Err(Error::DecompositionFailed(
            "no pose places a majority of points in front of both cameras".into(),
        )),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sfm::fundamental::tests::{intrinsics, true_fundamental, two_view};
    use crate::sfm::{estimate_fundamental, RansacParams};
    use nalgebra::Rotation3;
    use proptest::prelude::*;

    fn singular_values(m: &Matrix3<f64>) -> [f64; 3] {
        let s = m.svd(false, false).singular_values;
        let mut v = [s[0], s[1], s[2]];
        v.sort_by(|a, b| b.total_cmp(a));
        v
    }

    #[test]
    fn identity_intrinsics_keep_f() {
        let pose = RigidTransform::from_scaled_axis(Vector3::new(0.0, 0.1, 0.0), Vector3::new(1.0, 0.0, 0.0));
        let e_true = EssentialMatrix::from_pose(&pose);
        let f = FundamentalMatrix::from_matrix(e_true.matrix()).unwrap();
        let k = CameraIntrinsics {
            fx: 1.0,
            fy: 1.0,
            cx: 0.0,
            cy: 0.0,
            skew: 0.0,
            width: 1,
            height: 1,
        };
        let e = essential_from_fundamental(&f, &k);
        let (a, b) = (e.matrix() / e.matrix().norm(), f.matrix());
        assert!((a - b).norm() < 1e-12 || (a + b).norm() < 1e-12);
    }

    #[test]
    fn product_matches_hand_multiplication() {
        let pose = RigidTransform::from_scaled_axis(Vector3::new(0.05, 0.0, 0.1), Vector3::new(1.0, 0.2, 0.0));
        let f = FundamentalMatrix::from_matrix(&true_fundamental(&pose)).unwrap();
        let k = intrinsics();
        let km = [[k.fx, 0.0, k.cx], [0.0, k.fy, k.cy], [0.0, 0.0, 1.0]];
        let mut hand = Matrix3::zeros();
        for i in 0..3 {
            for j in 0..3 {
                for a in 0..3 {
                    for b in 0..3 {
                        hand[(i, j)] += km[a][i] * f.matrix()[(a, b)] * km[b][j];
                    }
                }
            }
        }
        let e = essential_from_fundamental(&f, &k);
        assert!((e.matrix() - hand).norm() < 1e-9 * hand.norm());
        let s = singular_values(e.matrix());
        assert!((s[0] - s[1]).abs() < 1e-9 * s[0] && s[2].abs() < 1e-9 * s[0]);
    }

    #[test]
    fn recovers_known_relative_pose() {
        let pose = RigidTransform::from_rotation(Rotation3::from_axis_angle(&Vector3::z_axis(), 10f64.to_radians()))
            .compose(&RigidTransform::identity());
        let pose = RigidTransform::from_approx(pose.rotation(), Vector3::new(1.0, 0.0, 0.0));
        let (_, corrs) = two_view(&pose, 40, 11);
        let est = estimate_fundamental(&corrs, &RansacParams::default()).unwrap();
        let e = essential_from_fundamental(&est.matrix, &intrinsics());
        let rec = decompose_essential(&e, &corrs, &intrinsics()).unwrap();
        assert!(rec.rotation_angle_to(&pose) < 1e-6);
        assert!((rec.translation() - pose.translation()).norm() < 1e-6);
        assert!((rec.translation().norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn pure_translation_gives_identity_rotation() {
        let pose = RigidTransform::from_translation(Vector3::new(1.0, 0.0, 0.0));
        let (_, corrs) = two_view(&pose, 20, 12);
        let rec = decompose_essential(&EssentialMatrix::from_pose(&pose), &corrs, &intrinsics()).unwrap();
        assert!(crate::geometry::rotation_angle(rec.rotation()) < 1e-9);
        assert!((rec.translation() - pose.translation()).norm() < 1e-9);
    }

    #[test]
    fn empty_correspondences_rejected() {
        let pose = RigidTransform::from_translation(Vector3::new(1.0, 0.0, 0.0));
        assert!(decompose_essential(&EssentialMatrix::from_pose(&pose), &[], &intrinsics()).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn decomposition_round_trip(
            axis in prop::array::uniform3(-0.2..0.2f64),
            dir in prop::array::uniform3(-1.0..1.0f64),
            seed in any::<u64>(),
        ) {
            let t = Vector3::from(dir);
            prop_assume!(t.norm() > 0.2);
            let pose = RigidTransform::from_scaled_axis(Vector3::from(axis), t.normalize());
            let (_, corrs) = two_view(&pose, 12, seed);
            let e = EssentialMatrix::from_pose(&pose);
            let s = singular_values(e.matrix());
            prop_assert!((s[0] - s[1]).abs() < 1e-9 && s[2].abs() < 1e-9);
            let rec = decompose_essential(&e, &corrs, &intrinsics()).unwrap();
            prop_assert!(rec.rotation_angle_to(&pose) < 1e-5);
            prop_assert!((rec.translation() - pose.translation()).norm() < 1e-5);
        }
    }
}
