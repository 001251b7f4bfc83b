use nalgebra::{DMatrix, Matrix3, Point2, Vector3};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::Correspondence;
use crate::error::{Error, Result};

/// Rank-2 fundamental matrix with unit Frobenius norm, `bᵀ·F·a = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FundamentalMatrix(Matrix3<f64>);

impl FundamentalMatrix {
    /// Projects `m` to rank 2 and unit norm, with a deterministic sign.
    pub fn from_matrix(m: &Matrix3<f64>) -> Result<Self> {
        let svd = m.svd(true, true);
        let (u, v_t) = (svd.u.expect("svd u"), svd.v_t.expect("svd v_t"));
        let mut s = svd.singular_values;
        s[2] = 0.0;
        Self::normalized(u * Matrix3::from_diagonal(&s) * v_t)
    }

    /// Unit norm and deterministic sign for a matrix that is already rank 2.
    fn normalized(mut f: Matrix3<f64>) -> Result<Self> {
        let norm = f.norm();
        if !(norm > 0.0 && norm.is_finite()) {
            return Err(Error::EstimationFailed("fundamental matrix vanished".into()));
        }
        f /= norm;
        let (idx, _) = f.iter().enumerate().fold(
            (0, 0.0),
            |best, (i, v)| {
                if v.abs() > best.1 {
                    (i, v.abs())
                } else {
                    best
                }
            },
        );
        if f[idx] < 0.0 {
            f = -f;
        }
        Ok(Self(f))
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    /// Algebraic epipolar residual `bᵀ·F·a`.
    pub fn residual(&self, c: &Correspondence) -> f64 {
        let a = Vector3::new(c.a.x, c.a.y, 1.0);
        let b = Vector3::new(c.b.x, c.b.y, 1.0);
        b.dot(&(self.0 * a))
    }
}

/// First-order geometric distance of a correspondence to the epipolar
/// constraint, in pixels.
pub fn sampson_distance(f: &Matrix3<f64>, c: &Correspondence) -> f64 {
    let a = Vector3::new(c.a.x, c.a.y, 1.0);
    let b = Vector3::new(c.b.x, c.b.y, 1.0);
    let fa = f * a;
    let ftb = f.transpose() * b;
    let num = b.dot(&fa);
    let den = fa.x * fa.x + fa.y * fa.y + ftb.x * ftb.x + ftb.y * ftb.y;
    if den <= 0.0 {
        return f64::INFINITY;
    }
    (num * num / den).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RansacParams {
    pub threshold_px: f64,
    pub iterations: usize,
    pub seed: u64,
    pub min_inlier_ratio: f64,
}

impl Default for RansacParams {
    fn default() -> Self {
        Self {
            threshold_px: 1.0,
            iterations: 1000,
            seed: 0x5eed,
            min_inlier_ratio: 0.3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FundamentalEstimate {
    pub matrix: FundamentalMatrix,
    /// Indices into the input correspondences, ascending.
    pub inliers: Vec<usize>,
    /// RMS of `bᵀ·F·a` over the inliers.
    pub residual_rms: f64,
}

/// Similarity taking points to zero mean and mean distance √2.
fn normalizer(points: impl Iterator<Item = Point2<f64>> + Clone) -> Matrix3<f64> {
    let n = points.clone().count() as f64;
    let (sx, sy) = points.clone().fold((0.0, 0.0), |acc, p| (acc.0 + p.x, acc.1 + p.y));
    let (mx, my) = (sx / n, sy / n);
    let mean_dist = points.map(|p| (p.x - mx).hypot(p.y - my)).sum::<f64>() / n;
    let s = if mean_dist > 1e-12 {
        std::f64::consts::SQRT_2 / mean_dist
    } else {
        1.0
    };
    Matrix3::new(s, 0.0, -s * mx, 0.0, s, -s * my, 0.0, 0.0, 1.0)
}

/// Hartley-normalised linear solve on at least 8 correspondences.
fn eight_point(corrs: &[Correspondence], subset: &[usize]) -> Result<FundamentalMatrix> {
    let ta = normalizer(subset.iter().map(|&i| corrs[i].a));
    let tb = normalizer(subset.iter().map(|&i| corrs[i].b));
    let rows = subset.len().max(9);
    let mut design = DMatrix::<f64>::zeros(rows, 9);
    for (r, &i) in subset.iter().enumerate() {
        let a = ta * Vector3::new(corrs[i].a.x, corrs[i].a.y, 1.0);
        let b = tb * Vector3::new(corrs[i].b.x, corrs[i].b.y, 1.0);
        let w = corrs[i].weight.max(0.0).sqrt();
        for (j, v) in [b.x * a.x, b.x * a.y, b.x, b.y * a.x, b.y * a.y, b.y, a.x, a.y, 1.0]
            .into_iter()
            .enumerate()
        {
            design[(r, j)] = w * v;
        }
    }
    let svd = design.svd(false, true);
    let v_t = svd.v_t.expect("svd v_t");
    let (min_idx, _) = svd.singular_values.argmin();
    let row = v_t.row(min_idx);
    let f_norm = Matrix3::from_row_iterator(row.iter().copied());
    let rank2 = FundamentalMatrix::from_matrix(&f_norm)?;
    // Denormalising preserves rank; another SVD here would only add round-off.
    FundamentalMatrix::normalized(tb.transpose() * rank2.0 * ta)
}

fn inliers_of(f: &Matrix3<f64>, corrs: &[Correspondence], threshold: f64) -> Vec<usize> {
    (0..corrs.len())
        .filter(|&i| sampson_distance(f, &corrs[i]) < threshold)
        .collect()
}

/// Robust fundamental matrix: 8-point hypotheses scored by Sampson distance,
/// then re-estimated on the consensus set.
pub fn estimate_fundamental(corrs: &[Correspondence], params: &RansacParams) -> Result<FundamentalEstimate> {
    if corrs.len() < 8 {
        return Err(Error::invalid(format!(
            "fundamental matrix needs at least 8 correspondences, got {}",
            corrs.len()
        )));
    }
    if corrs
        .iter()
        .any(|c| !(c.a.x.is_finite() && c.a.y.is_finite() && c.b.x.is_finite() && c.b.y.is_finite()))
    {
        return Err(Error::invalid("correspondences must be finite"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut best: Vec<usize> = Vec::new();
    for _ in 0..params.iterations.max(1) {
        let subset = sample(&mut rng, corrs.len(), 8).into_vec();
        let Ok(f) = eight_point(corrs, &subset) else {
            continue;
        };
        let inl = inliers_of(&f.0, corrs, params.threshold_px);
        if inl.len() > best.len() {
            best = inl;
            if best.len() == corrs.len() {
                break;
            }
        }
    }
    if best.len() < 8 {
        return Err(Error::EstimationFailed(format!(
            "only {} of {} correspondences fit any hypothesis",
            best.len(),
            corrs.len()
        )));
    }
    // Refit on the consensus set until it stops changing.
    let mut f = eight_point(corrs, &best)?;
    for _ in 0..5 {
        let inl = inliers_of(&f.0, corrs, params.threshold_px);
        if inl == best || inl.len() < 8 {
            break;
        }
        best = inl;
        f = eight_point(corrs, &best)?;
    }
    let inliers = inliers_of(&f.0, corrs, params.threshold_px);
    let ratio = inliers.len() as f64 / corrs.len() as f64;
    if inliers.len() < 8 || ratio < params.min_inlier_ratio {
        return Err(Error::EstimationFailed(format!(
            "inlier ratio {:.2} below {:.2}",
            ratio, params.min_inlier_ratio
        )));
    }
    let residual_rms =
        (inliers.iter().map(|&i| f.residual(&corrs[i]).powi(2)).sum::<f64>() / inliers.len() as f64).sqrt();
    Ok(FundamentalEstimate {
        matrix: f,
        inliers,
        residual_rms,
    })
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::geometry::{skew, CameraIntrinsics, RigidTransform};
    use nalgebra::{Point3, Vector3};
    use rand::Rng;

    pub(crate) fn intrinsics() -> CameraIntrinsics {
        CameraIntrinsics::new(500.0, 500.0, 320.0, 240.0, 640, 480).unwrap()
    }

    /// Random points in front of both cameras and their exact projections.
    pub(crate) fn two_view(pose_b: &RigidTransform, n: usize, seed: u64) -> (Vec<Point3<f64>>, Vec<Correspondence>) {
        let k = intrinsics();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut points = Vec::new();
        let mut corrs = Vec::new();
        while points.len() < n {
            let p = Point3::new(
                rng.gen_range(-2.0..2.0),
                rng.gen_range(-1.5..1.5),
                rng.gen_range(4.0..9.0),
            );
            let (Some(a), Some(b)) = (k.project(&p), k.project(&pose_b.apply(&p))) else {
                continue;
            };
            if !(k.contains(a.x, a.y) && k.contains(b.x, b.y)) {
                continue;
            }
            points.push(p);
            corrs.push(Correspondence::new(a, b));
        }
        (points, corrs)
    }

    pub(crate) fn true_fundamental(pose_b: &RigidTransform) -> Matrix3<f64> {
        let kinv = intrinsics().matrix().try_inverse().unwrap();
        let e = skew(pose_b.translation()) * pose_b.rotation();
        kinv.transpose() * e * kinv
    }

    fn pose() -> RigidTransform {
        RigidTransform::from_scaled_axis(Vector3::new(0.02, -0.15, 0.05), Vector3::new(-1.0, 0.1, 0.05))
    }

    fn matches_up_to_scale(a: &Matrix3<f64>, b: &Matrix3<f64>) -> bool {
        let (a, b) = (a / a.norm(), b / b.norm());
        (a - b).norm() < 1e-6 || (a + b).norm() < 1e-6
    }

    #[test]
    fn exact_correspondences_recover_f() {
        let (_, corrs) = two_view(&pose(), 30, 1);
        let est = estimate_fundamental(&corrs, &RansacParams::default()).unwrap();
        assert_eq!(est.inliers.len(), 30);
        assert!(matches_up_to_scale(est.matrix.matrix(), &true_fundamental(&pose())));
        let worst = corrs.iter().map(|c| est.matrix.residual(c).abs()).fold(0.0, f64::max);
        assert!(worst < 1e-8, "{worst}");
        assert!((est.matrix.matrix().norm() - 1.0).abs() < 1e-12);
        assert!(est.matrix.matrix().determinant().abs() < 1e-12);
    }

    #[test]
    fn too_few_correspondences_rejected() {
        let (_, corrs) = two_view(&pose(), 7, 2);
        assert!(matches!(
            estimate_fundamental(&corrs, &RansacParams::default()),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn planted_outliers_are_excluded() {
        let (_, mut corrs) = two_view(&pose(), 30, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..10 {
            corrs.push(Correspondence::new(
                Point2::new(rng.gen_range(0.0..640.0), rng.gen_range(0.0..480.0)),
                Point2::new(rng.gen_range(0.0..640.0), rng.gen_range(0.0..480.0)),
            ));
        }
        let est = estimate_fundamental(&corrs, &RansacParams::default()).unwrap();
        assert!((0..30).all(|i| est.inliers.contains(&i)));
        let planted = est.inliers.iter().filter(|&&i| i >= 30).count();
        // A random pair can land on its epipolar line by chance; it must then
        // also satisfy the true geometry.
        for &i in est.inliers.iter().filter(|&&i| i >= 30) {
            assert!(sampson_distance(&true_fundamental(&pose()), &corrs[i]) < 2.0);
        }
        assert!(planted <= 2);
        assert!(matches_up_to_scale(est.matrix.matrix(), &true_fundamental(&pose())));
        for &i in &est.inliers {
            assert!(sampson_distance(est.matrix.matrix(), &corrs[i]) < 1.0);
        }
    }

    #[test]
    fn mostly_random_input_fails() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let corrs: Vec<Correspondence> = (0..100)
            .map(|_| {
                Correspondence::new(
                    Point2::new(rng.gen_range(0.0..640.0), rng.gen_range(0.0..480.0)),
                    Point2::new(rng.gen_range(0.0..640.0), rng.gen_range(0.0..480.0)),
                )
            })
            .collect();
        let params = RansacParams {
            iterations: 200,
            ..RansacParams::default()
        };
        assert!(matches!(
            estimate_fundamental(&corrs, &params),
            Err(Error::EstimationFailed(_))
        ));
    }
}
