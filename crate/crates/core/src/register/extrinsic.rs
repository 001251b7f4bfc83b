//! From a LiDAR scan, a scale-free reconstruction and its camera poses to
//! per-camera LiDAR→camera extrinsics.

use nalgebra::{Matrix3, Point3, Vector3};
use serde::{Deserialize, Serialize};

use super::clusters::{level_fit, match_level_clusters, scale_factor, ClusterMatching, ClusterSet, ScaleFactor};
use super::dbscan::dbscan;
use super::filter::statistical_outlier_filter;
use super::icp::{joint_refine_problem, register_pair, RegistrationParams, SurfaceTarget};
use super::preprocess::{preprocess_indices, PreprocessParams};
use super::spatial::PointIndex;
use crate::error::{Error, Result};
use crate::geometry::{PointCloud, RigidTransform};
use crate::sfm::CameraPose;

/// LiDAR→camera transform from the reconstruction-to-LiDAR transform and a
/// metric camera pose: `pose ∘ global⁻¹`.
pub fn camera_extrinsic(global: &RigidTransform, camera_pose: &RigidTransform) -> RigidTransform {
    camera_pose.compose(&global.inverse())
}

/// Percentage of LiDAR points with at least one transformed reconstruction
/// point within `radius`. `transform` maps the reconstruction cluster into
/// the LiDAR frame.
pub fn correspondence_score(
    lidar_cluster: &PointCloud,
    sfm_cluster: &PointCloud,
    transform: &RigidTransform,
    radius: f64,
) -> Result<f64> {
    if lidar_cluster.is_empty() {
        return Err(Error::invalid("correspondence score of an empty LiDAR cluster"));
    }
    if !(radius.is_finite() && radius > 0.0) {
        return Err(Error::invalid(format!(
            "correspondence radius must be positive, got {radius}"
        )));
    }
    let moved: Vec<Point3<f64>> = sfm_cluster.points.iter().map(|p| transform.apply(p)).collect();
    let index = PointIndex::new(&moved);
    let hits = lidar_cluster
        .points
        .iter()
        .filter(|p| index.nearest(p).is_some_and(|(_, d2)| d2 <= radius * radius))
        .count();
    Ok(100.0 * hits as f64 / lidar_cluster.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtrinsicParams {
    pub outlier_neighbours: usize,
    pub outlier_std_ratio: f64,
    pub preprocess: PreprocessParams,
    pub dbscan_eps: f64,
    pub dbscan_min_points: usize,
    /// Clusters smaller than this are ignored.
    pub min_cluster_points: usize,
    pub registration: RegistrationParams,
    pub correspondence_radius: f64,
    /// Refine the cluster-derived scale together with the rigid alignment.
    pub refine_scale: bool,
    /// View whose camera frame levels the reconstruction.
    pub reference_view: usize,
}

impl Default for ExtrinsicParams {
    fn default() -> Self {
        Self {
            outlier_neighbours: 20,
            outlier_std_ratio: 2.0,
            preprocess: PreprocessParams::default(),
            dbscan_eps: 0.25,
            dbscan_min_points: 10,
            min_cluster_points: 60,
            registration: RegistrationParams::default(),
            correspondence_radius: 0.05,
            refine_scale: true,
            reference_view: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterScore {
    pub lidar_cluster: usize,
    pub sfm_cluster: usize,
    pub lidar_points: usize,
    /// Percentage, see [`correspondence_score`].
    pub score: f64,
    /// Whether the feature-initialised pair registration succeeded.
    pub pair_registered: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtrinsicCalibration {
    /// Multiplier taking reconstruction units to metres.
    pub scale: ScaleFactor,
    /// Scale from the cluster centroids alone, before joint refinement.
    pub centroid_scale: f64,
    /// Metric reconstruction frame → LiDAR frame.
    pub sfm_to_lidar: RigidTransform,
    /// Per view, LiDAR → camera.
    pub extrinsics: Vec<(usize, RigidTransform)>,
    pub matching: ClusterMatching,
    pub cluster_scores: Vec<ClusterScore>,
    /// Point-weighted correspondence score over all matched clusters.
    pub overall_score: f64,
    /// Mean truncated point-to-plane cost after joint refinement.
    pub final_residual: f64,
    pub lidar_clusters: usize,
    pub sfm_clusters: usize,
}

/// Camera axes (right, down, forward) to a level body frame (forward, left, up).
fn camera_to_level() -> RigidTransform {
    let m = Matrix3::new(0.0, 0.0, 1.0, -1.0, 0.0, 0.0, 0.0, -1.0, 0.0);
    RigidTransform::from_approx(&m, Vector3::zeros())
}

fn median(mut values: Vec<f64>) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    Some(values[values.len() / 2])
}

fn low_percentile_z(points: &[Point3<f64>]) -> f64 {
    let mut z: Vec<f64> = points.iter().map(|p| p.z).collect();
    z.sort_by(f64::total_cmp);
    z[(z.len() as f64 * 0.01) as usize]
}

/// Band above the lowest percentile holding the floor.
const FLOOR_BAND: f64 = 0.1;

/// Least-squares floor plane `z = a·x + b·y + offset`.
struct FloorPlane {
    points: Vec<Point3<f64>>,
    /// `(a, b, offset)`.
    coeffs: Vector3<f64>,
}

impl FloorPlane {
    fn normal(&self) -> Vector3<f64> {
        Vector3::new(-self.coeffs.x, -self.coeffs.y, 1.0).normalize()
    }

    fn height_at(&self, x: f64, y: f64) -> f64 {
        self.coeffs.x * x + self.coeffs.y * y + self.coeffs.z
    }
}

/// Fits the floor in the band just above the lowest percentile, when that
/// band is populated and flat. Two trimming passes drop object bases.
fn floor_plane(points: &[Point3<f64>]) -> Option<FloorPlane> {
    if points.is_empty() {
        return None;
    }
    let low = low_percentile_z(points);
    let mut band: Vec<Point3<f64>> = points.iter().filter(|p| p.z <= low + FLOOR_BAND).copied().collect();
    if band.len() < 50.max(points.len() / 50) {
        return None;
    }
    let mut coeffs = Vector3::new(0.0, 0.0, median(band.iter().map(|p| p.z).collect())?);
    for _ in 0..3 {
        let mut normal = Matrix3::zeros();
        let mut rhs = Vector3::zeros();
        for p in &band {
            let row = Vector3::new(p.x, p.y, 1.0);
            normal += row * row.transpose();
            rhs += row * p.z;
        }
        coeffs = normal.try_inverse()? * rhs;
        let residual = |p: &Point3<f64>| (p.z - coeffs.x * p.x - coeffs.y * p.y - coeffs.z).abs();
        let spread = median(band.iter().map(residual).collect())?;
        if spread > 0.2 * FLOOR_BAND {
            return None;
        }
        let keep = 3.0 * spread.max(1e-6) / 0.6745;
        band.retain(|p| residual(p) <= keep);
    }
    Some(FloorPlane { points: band, coeffs })
}

/// Filter, strip ceiling/ground/walls and cluster. The ceiling height is
/// taken relative to the lowest percentile of the cloud, which stands in for
/// the floor of a frame whose origin is the sensor.
fn object_clusters(cloud: &PointCloud, params: &ExtrinsicParams) -> Result<ClusterSet> {
    let kept = statistical_outlier_filter(&cloud.points, params.outlier_neighbours, params.outlier_std_ratio);
    let filtered = cloud.select(&kept);
    if filtered.is_empty() {
        return Ok(ClusterSet::default());
    }
    let floor = low_percentile_z(&filtered.points);
    let shifted = filtered.transformed(&RigidTransform::from_translation(Vector3::new(0.0, 0.0, -floor)));
    let objects = filtered.select(&preprocess_indices(&shifted, &params.preprocess)?);
    let clustering = dbscan(&objects, params.dbscan_eps, params.dbscan_min_points)?;
    let clusters = clustering
        .clusters
        .clusters
        .into_iter()
        .filter(|c| c.len() >= params.min_cluster_points)
        .collect();
    Ok(ClusterSet::new(clusters, floor))
}

/// Targetless extrinsic calibration.
///
/// `poses` map the reconstruction's world frame to each camera, in
/// reconstruction units. The reference view must be mounted level (image
/// rows horizontal); its frame is used to level the reconstruction before
/// the vertical-structure filters run.
pub fn calibrate_extrinsics(
    lidar: &PointCloud,
    sfm: &PointCloud,
    poses: &[CameraPose],
    params: &ExtrinsicParams,
) -> Result<ExtrinsicCalibration> {
    if lidar.is_empty() || sfm.is_empty() {
        return Err(Error::invalid(
            "extrinsic calibration needs non-empty LiDAR and reconstruction clouds",
        ));
    }
    let reference = poses
        .iter()
        .find(|p| p.view == params.reference_view)
        .ok_or_else(|| Error::invalid(format!("no pose for reference view {}", params.reference_view)))?;
    let level = camera_to_level().compose(&reference.world_to_camera);
    let levelled = sfm.transformed(&level);

    // Coarse metric scale from typical ranges, so that metre-valued filter
    // parameters apply to the reconstruction as well.
    // Only the elevation band seen by the reconstruction is compared, since
    // the scan usually covers far more of the sphere than the cameras do.
    let elevation = |p: &Point3<f64>| p.z.atan2(p.xy().coords.norm());
    let mut band: Vec<f64> = levelled.points.iter().map(elevation).collect();
    band.sort_by(f64::total_cmp);
    let (lo, hi) = match band.len() {
        0 => (f64::NEG_INFINITY, f64::INFINITY),
        n => (band[n / 20], band[(n * 19) / 20]),
    };
    let range = |c: &PointCloud| {
        median(
            c.points
                .iter()
                .filter(|p| (lo..=hi).contains(&elevation(p)))
                .map(|p| p.coords.norm())
                .collect(),
        )
    };
    let coarse = match (range(lidar), range(&levelled)) {
        (Some(a), Some(b)) if a > 0.0 && b > 0.0 => a / b,
        _ => return Err(Error::DegenerateScale("clouds have no spatial extent".into())),
    };
    let metric_guess = levelled.scaled(coarse);

    let lidar_set = object_clusters(lidar, params)?;
    let sfm_set = object_clusters(&metric_guess, params)?;
    if lidar_set.is_empty() || sfm_set.is_empty() {
        return Err(Error::MatchingFailed(format!(
            "no object clusters (LiDAR {}, reconstruction {})",
            lidar_set.len(),
            sfm_set.len()
        )));
    }
    let matching = match_level_clusters(&lidar_set, &sfm_set)?;
    let relative = scale_factor(&lidar_set, &sfm_set, &matching.pairs)?.value();
    let centroid_scale = coarse * relative;

    let pairs: Vec<(PointCloud, PointCloud)> = matching
        .pairs
        .iter()
        .map(|&(i, j)| (lidar_set.clusters[i].clone(), sfm_set.clusters[j].scaled(relative)))
        .collect();

    // Candidate starting points for the joint step.
    let mut candidates = vec![RigidTransform::identity()];
    let src: Vec<Point3<f64>> = matching.pairs.iter().map(|&(i, _)| lidar_set.centroids[i]).collect();
    let dst: Vec<Point3<f64>> = matching
        .pairs
        .iter()
        .map(|&(_, j)| Point3::from(sfm_set.centroids[j].coords * relative))
        .collect();
    candidates.extend(level_fit(&src, &dst));
    let mut registered = vec![false; pairs.len()];
    for (k, (l, s)) in pairs.iter().enumerate() {
        if let Ok(r) = register_pair(l, s, &params.registration) {
            registered[k] = true;
            candidates.push(r.transform);
        }
    }

    let reg = &params.registration;
    let targets: Vec<SurfaceTarget> = pairs
        .iter()
        .map(|(_, s)| SurfaceTarget::new(s, reg.normal_neighbours))
        .collect();
    let problem: Vec<(&[Point3<f64>], &SurfaceTarget)> = pairs
        .iter()
        .zip(&targets)
        .map(|((l, _), t)| (l.points.as_slice(), t))
        .collect();
    let widest = reg.radii.iter().copied().fold(0.0, f64::max);
    let start = candidates
        .iter()
        .map(|c| (joint_cost(&problem, c, widest), *c))
        .min_by(|a, b| a.0.total_cmp(&b.0))
        .map(|(_, c)| c)
        .expect("identity is always a candidate");
    let (rigid, _, _, _) = joint_refine_problem(&problem, start, 1.0, reg, false)?;
    let (aligned, _, final_residual, _) = if params.refine_scale {
        joint_refine_problem(&problem, rigid.transform, 1.0, reg, true)?
    } else {
        joint_refine_problem(&problem, rigid.transform, 1.0, reg, false)?
    };
    let scale = ScaleFactor::new(centroid_scale * aligned.scale)?;
    // Ground removal leaves height and tilt weakly constrained by the
    // clusters alone; pin both by matching the floor of each cloud.
    let mut lidar_to_levelled = aligned.transform;
    let metric = levelled.scaled(scale.value());
    if let (Some(lidar_floor), Some(sfm_floor)) = (floor_plane(&lidar.points), floor_plane(&metric.points)) {
        let pivot = src
            .iter()
            .fold(Vector3::zeros(), |acc, p| acc + lidar_to_levelled.apply(p).coords)
            / src.len() as f64;
        let mapped_normal = lidar_to_levelled.rotate(&lidar_floor.normal());
        if let Some(tilt) = nalgebra::Rotation3::rotation_between(&mapped_normal, &sfm_floor.normal()) {
            let about_pivot = RigidTransform::from_approx(tilt.matrix(), pivot - tilt * pivot);
            lidar_to_levelled = about_pivot.compose(&lidar_to_levelled);
        }
        let gaps: Vec<f64> = lidar_floor
            .points
            .iter()
            .map(|p| {
                let q = lidar_to_levelled.apply(p);
                sfm_floor.height_at(q.x, q.y) - q.z
            })
            .collect();
        if let Some(dz) = median(gaps) {
            let shift = RigidTransform::from_translation(Vector3::new(0.0, 0.0, dz));
            lidar_to_levelled = shift.compose(&lidar_to_levelled);
        }
    }

    // Levelled metric frame → LiDAR, then the reconstruction's metric world
    // frame → LiDAR.
    let s = scale.value();
    let metric_pose = |p: &RigidTransform| RigidTransform::from_approx(p.rotation(), p.translation() * s);
    let sfm_to_lidar = lidar_to_levelled
        .inverse()
        .compose(&camera_to_level())
        .compose(&metric_pose(&reference.world_to_camera));
    let extrinsics = poses
        .iter()
        .map(|p| {
            (
                p.view,
                camera_extrinsic(&sfm_to_lidar, &metric_pose(&p.world_to_camera)),
            )
        })
        .collect();

    let to_lidar = lidar_to_levelled.inverse();
    let mut cluster_scores = Vec::with_capacity(pairs.len());
    let (mut weighted, mut total) = (0.0, 0usize);
    for (k, &(i, j)) in matching.pairs.iter().enumerate() {
        let lidar_cluster = &lidar_set.clusters[i];
        let sfm_metric = sfm_set.clusters[j].scaled(relative * aligned.scale);
        let score = correspondence_score(lidar_cluster, &sfm_metric, &to_lidar, params.correspondence_radius)?;
        weighted += score * lidar_cluster.len() as f64;
        total += lidar_cluster.len();
        cluster_scores.push(ClusterScore {
            lidar_cluster: i,
            sfm_cluster: j,
            lidar_points: lidar_cluster.len(),
            score,
            pair_registered: registered[k],
        });
    }

    Ok(ExtrinsicCalibration {
        scale,
        centroid_scale,
        sfm_to_lidar,
        extrinsics,
        matching,
        cluster_scores,
        overall_score: weighted / total.max(1) as f64,
        final_residual,
        lidar_clusters: lidar_set.len(),
        sfm_clusters: sfm_set.len(),
    })
}

fn joint_cost(problem: &[(&[Point3<f64>], &SurfaceTarget)], t: &RigidTransform, radius: f64) -> f64 {
    super::icp::mean_cost_at(problem, t, radius)
}
