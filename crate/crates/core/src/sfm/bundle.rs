use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector, Matrix2x3, Matrix3, Matrix6, Matrix6x3, Point3, SMatrix, Vector2, Vector3, Vector6};
use serde::{Deserialize, Serialize};

use super::triangulate::project_with_jacobian;
use super::Observation;
use crate::error::{Error, Result};
use crate::geometry::{skew, CameraIntrinsics, RigidTransform};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BundleParams {
    pub max_iterations: usize,
    /// Stop once an accepted step lowers the cost by less than this fraction.
    pub relative_tolerance: f64,
    pub initial_damping: f64,
}

impl Default for BundleParams {
    fn default() -> Self {
        Self {
            max_iterations: 100,
            relative_tolerance: 1e-10,
            initial_damping: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BundleResult {
    pub poses: Vec<RigidTransform>,
    pub points: Vec<Point3<f64>>,
    pub initial_cost: f64,
    /// Sum of squared pixel residuals.
    pub final_cost: f64,
    /// Cost after every accepted step, starting with the initial cost.
    pub cost_history: Vec<f64>,
    pub iterations: usize,
}

impl BundleResult {
    pub fn rms_px(&self, observation_count: usize) -> f64 {
        (self.final_cost / observation_count.max(1) as f64).sqrt()
    }
}

/// Residual derivative with respect to a pose increment.
pub type PoseJacobian = SMatrix<f64, 2, 6>;

/// Residual and Jacobians of one observation; the pose block is ordered
/// (rotation increment ω, translation increment δ) for the update
/// `R ← exp([ω]×)·R`, `t ← t + δ`.
pub fn observation_terms(
    k: &CameraIntrinsics,
    pose: &RigidTransform,
    point: &Point3<f64>,
    pixel: &Vector2<f64>,
) -> Option<(Vector2<f64>, PoseJacobian, Matrix2x3<f64>)> {
    let rx = pose.rotation() * point.coords;
    let pc = rx + pose.translation();
    if pc.z <= 0.0 {
        return None;
    }
    let (proj, jp) = project_with_jacobian(k, &pc);
    let mut j_pose = PoseJacobian::zeros();
    j_pose.fixed_view_mut::<2, 3>(0, 0).copy_from(&(jp * -skew(&rx)));
    j_pose.fixed_view_mut::<2, 3>(0, 3).copy_from(&jp);
    let j_point = jp * pose.rotation();
    Some((proj - pixel, j_pose, j_point))
}

fn total_cost(k: &CameraIntrinsics, poses: &[RigidTransform], points: &[Point3<f64>], obs: &[Observation]) -> f64 {
    obs.iter()
        .map(|o| {
            let pc = poses[o.view].apply(&points[o.point]);
            match k.project_xyz(pc.x, pc.y, pc.z) {
                Some((u, v)) => (u - o.pixel.x).powi(2) + (v - o.pixel.y).powi(2),
                None => f64::INFINITY,
            }
        })
        .sum()
}

fn validate(poses: &[RigidTransform], points: &[Point3<f64>], obs: &[Observation]) -> Result<()> {
    if poses.len() < 2 {
        return Err(Error::invalid("bundle adjustment needs at least two views"));
    }
    let mut views_per_point = vec![std::collections::BTreeSet::new(); points.len()];
    for o in obs {
        if o.view >= poses.len() || o.point >= points.len() {
            return Err(Error::invalid(format!(
                "observation references view {} / point {} out of range",
                o.view, o.point
            )));
        }
        views_per_point[o.point].insert(o.view);
    }
    if let Some(i) = views_per_point.iter().position(|v| v.len() < 2) {
        return Err(Error::invalid(format!("point {i} is seen from fewer than two views")));
    }
    let unknowns = 6 * (poses.len() - 1) + 3 * points.len();
    if 2 * obs.len() < unknowns {
        return Err(Error::invalid(format!(
            "{} residuals cannot constrain {unknowns} unknowns",
            2 * obs.len()
        )));
    }
    Ok(())
}

/// Levenberg–Marquardt over all poses except the first and all points,
/// solved through the Schur complement on the pose block.
pub fn bundle_adjust(
    poses: &[RigidTransform],
    points: &[Point3<f64>],
    obs: &[Observation],
    k: &CameraIntrinsics,
    params: &BundleParams,
) -> Result<BundleResult> {
    validate(poses, points, obs)?;
    let free = poses.len() - 1;
    let mut poses = poses.to_vec();
    let mut points = points.to_vec();
    let mut cost = total_cost(k, &poses, &points, obs);
    if !cost.is_finite() {
        return Err(Error::invalid("initial configuration has points behind a camera"));
    }
    let initial_cost = cost;
    let mut history = vec![cost];
    let mut lambda = params.initial_damping;
    let mut iterations = 0;

    let mut by_point: Vec<Vec<usize>> = vec![Vec::new(); points.len()];
    for (i, o) in obs.iter().enumerate() {
        by_point[o.point].push(i);
    }

    while iterations < params.max_iterations && cost > 0.0 {
        iterations += 1;
        let mut u = vec![Matrix6::<f64>::zeros(); free];
        let mut g_pose = vec![Vector6::<f64>::zeros(); free];
        let mut v = vec![Matrix3::<f64>::zeros(); points.len()];
        let mut g_point = vec![Vector3::<f64>::zeros(); points.len()];
        // Per point: pose index -> accumulated cross block.
        let mut w: Vec<BTreeMap<usize, Matrix6x3<f64>>> = vec![BTreeMap::new(); points.len()];
        for o in obs {
            let Some((r, jc, jx)) = observation_terms(k, &poses[o.view], &points[o.point], &o.pixel.coords) else {
                return Err(Error::invalid("a point moved behind a camera"));
            };
            v[o.point] += jx.transpose() * jx;
            g_point[o.point] += jx.transpose() * r;
            if o.view > 0 {
                let c = o.view - 1;
                u[c] += jc.transpose() * jc;
                g_pose[c] += jc.transpose() * r;
                *w[o.point].entry(c).or_insert_with(Matrix6x3::zeros) += jc.transpose() * jx;
            }
        }

        let damp6 = |m: &Matrix6<f64>| m + Matrix6::from_diagonal(&(m.diagonal() * lambda));
        let damp3 = |m: &Matrix3<f64>| m + Matrix3::from_diagonal(&(m.diagonal() * lambda));
        let v_inv: Vec<Option<Matrix3<f64>>> = v.iter().map(|m| damp3(m).try_inverse()).collect();
        if v_inv.iter().any(|m| m.is_none()) {
            return Err(Error::IllConditioned("point block is singular".into()));
        }
        let v_inv: Vec<Matrix3<f64>> = v_inv.into_iter().map(Option::unwrap).collect();

        let n = 6 * free;
        let mut s = DMatrix::<f64>::zeros(n, n);
        let mut rhs = DVector::<f64>::zeros(n);
        for c in 0..free {
            s.view_mut((6 * c, 6 * c), (6, 6)).copy_from(&damp6(&u[c]));
            rhs.rows_mut(6 * c, 6).copy_from(&-g_pose[c]);
        }
        for (i, blocks) in w.iter().enumerate() {
            for (&a, wa) in blocks {
                let wv = wa * v_inv[i];
                let adj = wv * g_point[i];
                let mut seg = rhs.rows_mut(6 * a, 6);
                seg += adj;
                for (&b, wb) in blocks {
                    let mut blk = s.view_mut((6 * a, 6 * b), (6, 6));
                    blk -= wv * wb.transpose();
                }
            }
        }
        let delta_pose = match s.clone().cholesky() {
            Some(ch) => ch.solve(&rhs),
            None => {
                lambda *= 10.0;
                if lambda > 1e16 {
                    break;
                }
                continue;
            }
        };

        let mut trial_poses = poses.clone();
        for c in 0..free {
            let d = delta_pose.rows(6 * c, 6);
            let omega = Vector3::new(d[0], d[1], d[2]);
            let delta = Vector3::new(d[3], d[4], d[5]);
            let p = &poses[c + 1];
            let rot = nalgebra::Rotation3::new(omega).into_inner() * p.rotation();
            trial_poses[c + 1] = RigidTransform::from_approx(&rot, p.translation() + delta);
        }
        let mut trial_points = points.clone();
        for (i, blocks) in w.iter().enumerate() {
            let mut b = -g_point[i];
            for (&a, wa) in blocks {
                b -= wa.transpose() * delta_pose.rows(6 * a, 6);
            }
            trial_points[i] += v_inv[i] * b;
        }

        let trial_cost = total_cost(k, &trial_poses, &trial_points, obs);
        if trial_cost.is_finite() && trial_cost < cost {
            let rel = (cost - trial_cost) / cost;
            poses = trial_poses;
            points = trial_points;
            cost = trial_cost;
            history.push(cost);
            lambda = (lambda / 10.0).max(1e-12);
            if rel < params.relative_tolerance {
                break;
            }
        } else {
            lambda *= 10.0;
            if lambda > 1e16 {
                break;
            }
        }
    }
    Ok(BundleResult {
        poses,
        points,
        initial_cost,
        final_cost: cost,
        cost_history: history,
        iterations,
    })
}
