//! Object clusters, their cross-modal matching and the metric scale they imply.

use nalgebra::{Point3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{PointCloud, RigidTransform};

/// Shape summary used to prune implausible cluster pairings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClusterDescriptor {
    pub count: usize,
    /// Axis-aligned bounding-box size.
    pub extents: Vector3<f64>,
    /// Lowest point above the reference floor.
    pub height_above_ground: f64,
}

#[derive(Debug, Clone, Default)]
pub struct ClusterSet {
    pub clusters: Vec<PointCloud>,
    pub centroids: Vec<Point3<f64>>,
    pub descriptors: Vec<ClusterDescriptor>,
}

impl ClusterSet {
    /// Builds the set, computing centroids and descriptors. `floor_z` is the
    /// height that `height_above_ground` is measured from. Empty clusters are
    /// dropped.
    pub fn new(clusters: Vec<PointCloud>, floor_z: f64) -> Self {
        let clusters: Vec<PointCloud> = clusters.into_iter().filter(|c| !c.is_empty()).collect();
        let centroids = clusters.iter().map(|c| c.centroid().expect("non-empty")).collect();
        let descriptors = clusters
            .iter()
            .map(|c| {
                let mut lo = Vector3::repeat(f64::INFINITY);
                let mut hi = Vector3::repeat(f64::NEG_INFINITY);
                for p in &c.points {
                    lo = lo.inf(&p.coords);
                    hi = hi.sup(&p.coords);
                }
                ClusterDescriptor {
                    count: c.len(),
                    extents: hi - lo,
                    height_above_ground: lo.z - floor_z,
                }
            })
            .collect();
        Self {
            clusters,
            centroids,
            descriptors,
        }
    }

    pub fn len(&self) -> usize {
        self.clusters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clusters.is_empty()
    }

    /// Keeps the `n` most populous clusters, preserving their relative order.
    pub fn largest(&self, n: usize) -> (ClusterSet, Vec<usize>) {
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.sort_by(|&a, &b| {
            self.descriptors[b]
                .count
                .cmp(&self.descriptors[a].count)
                .then(a.cmp(&b))
        });
        order.truncate(n);
        order.sort_unstable();
        let subset = ClusterSet {
            clusters: order.iter().map(|&i| self.clusters[i].clone()).collect(),
            centroids: order.iter().map(|&i| self.centroids[i]).collect(),
            descriptors: order.iter().map(|&i| self.descriptors[i]).collect(),
        };
        (subset, order)
    }

    fn total_points(&self) -> usize {
        self.descriptors.iter().map(|d| d.count).sum()
    }
}

/// Pairing of clusters across two sets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterMatching {
    /// `(index in a, index in b)`, sorted by the first index.
    pub pairs: Vec<(usize, usize)>,
    pub unmatched_a: Vec<usize>,
    pub unmatched_b: Vec<usize>,
    /// Scale taking b's inter-centroid distances onto a's.
    pub relative_scale: f64,
    /// Largest relative distance-graph residual among the pairs.
    pub max_residual: f64,
}

/// Distance-graph residual above which a pairing is inconsistent.
pub const MAX_GRAPH_RESIDUAL: f64 = 0.10;
const MAX_DESCRIPTOR_RATIO: f64 = 2.0;
const SEED_LIMIT: usize = 12;

fn ratio_ok(x: f64, y: f64, tol: f64) -> bool {
    if x <= 1e-9 || y <= 1e-9 {
        return x <= 1e-9 && y <= 1e-9 || (x - y).abs() < 0.05;
    }
    let r = x / y;
    r <= tol && r >= 1.0 / tol
}

struct Context<'a> {
    /// Both sets share a vertical axis, so pairings must agree under a yaw
    /// rotation and translation rather than just in their distances.
    level: bool,
    a: &'a ClusterSet,
    b: &'a ClusterSet,
    dist_a: Vec<Vec<f64>>,
    dist_b: Vec<Vec<f64>>,
    count_a: f64,
    count_b: f64,
}

impl Context<'_> {
    /// Descriptor plausibility of pairing a[i] with b[j] at scale `sigma`
    /// (b distances times sigma equal a distances).
    fn compatible(&self, i: usize, j: usize, sigma: f64) -> bool {
        let (da, db) = (&self.a.descriptors[i], &self.b.descriptors[j]);
        let count = ratio_ok(
            da.count as f64 / self.count_a,
            db.count as f64 / self.count_b,
            MAX_DESCRIPTOR_RATIO,
        );
        let height = ratio_ok(da.extents.z, db.extents.z * sigma, MAX_DESCRIPTOR_RATIO);
        let width = ratio_ok(
            da.extents.x.max(da.extents.y),
            db.extents.x.max(db.extents.y) * sigma,
            MAX_DESCRIPTOR_RATIO,
        );
        count && height && width
    }

    fn descriptor_cost(&self, i: usize, j: usize, sigma: f64) -> f64 {
        let (da, db) = (&self.a.descriptors[i], &self.b.descriptors[j]);
        let log_ratio = |x: f64, y: f64| ((x + 1e-6) / (y + 1e-6)).ln().abs();
        log_ratio(da.extents.z, db.extents.z * sigma)
            + log_ratio(da.extents.x.max(da.extents.y), db.extents.x.max(db.extents.y) * sigma)
            + log_ratio(da.count as f64 / self.count_a, db.count as f64 / self.count_b)
    }

    /// Worst relative residual of adding (i, j) to `pairs`.
    fn residual(&self, pairs: &[(usize, usize)], i: usize, j: usize, sigma: f64) -> f64 {
        pairs
            .iter()
            .map(|&(p, q)| {
                let da = self.dist_a[i][p];
                let db = self.dist_b[j][q] * sigma;
                (da - db).abs() / da.max(db).max(1e-9)
            })
            .fold(0.0, f64::max)
    }

    /// Relative residual of the best yaw-and-translation fit of the paired
    /// centroids, measured against their mean spread.
    fn level_residual(&self, pairs: &[(usize, usize)], sigma: f64) -> f64 {
        let src: Vec<Point3<f64>> = pairs
            .iter()
            .map(|&(_, j)| Point3::from(self.b.centroids[j].coords * sigma))
            .collect();
        let dst: Vec<Point3<f64>> = pairs.iter().map(|&(i, _)| self.a.centroids[i]).collect();
        let Some(fit) = level_fit(&src, &dst) else {
            return 0.0;
        };
        let n = dst.len() as f64;
        let centre = dst.iter().fold(Vector3::zeros(), |acc, p| acc + p.coords) / n;
        let spread = dst.iter().map(|p| (p.coords - centre).norm()).sum::<f64>() / n;
        let worst = src
            .iter()
            .zip(&dst)
            .map(|(s, d)| (fit.apply(s) - d).norm())
            .fold(0.0, f64::max);
        worst / spread.max(1e-9)
    }
}

/// Rotation about z plus translation fitted to matched points in least
/// squares. Needs at least two pairs.
pub(crate) fn level_fit(src: &[Point3<f64>], dst: &[Point3<f64>]) -> Option<RigidTransform> {
    let n = src.len() as f64;
    if src.len() < 2 || src.len() != dst.len() {
        return None;
    }
    let cs = src.iter().fold(Vector3::zeros(), |a, p| a + p.coords) / n;
    let cd = dst.iter().fold(Vector3::zeros(), |a, p| a + p.coords) / n;
    let (mut sin, mut cos) = (0.0, 0.0);
    for (s, d) in src.iter().zip(dst) {
        let (a, b) = (s.coords - cs, d.coords - cd);
        cos += a.x * b.x + a.y * b.y;
        sin += a.x * b.y - a.y * b.x;
    }
    let yaw = sin.atan2(cos);
    let rot = RigidTransform::rot_z(yaw);
    let t = cd - rot.rotate(&cs);
    Some(RigidTransform::from_scaled_axis(Vector3::z() * yaw, t))
}

fn distance_matrix(c: &[Point3<f64>]) -> Vec<Vec<f64>> {
    c.iter().map(|p| c.iter().map(|q| (p - q).norm()).collect()).collect()
}

struct Candidate {
    pairs: Vec<(usize, usize)>,
    sigma: f64,
    cost: f64,
    max_residual: f64,
}

/// Matches clusters by consistency of their inter-centroid distance graphs
/// under a common scale, pruned by descriptor similarity. Seeds are every
/// pair of pairs; each seed grows greedily and the seed matching most
/// clusters at lowest cost wins.
pub fn match_clusters(a: &ClusterSet, b: &ClusterSet) -> Result<ClusterMatching> {
    search(a, b, false)
}

/// [`match_clusters`] for two sets expressed in frames sharing the vertical
/// axis: mirrored or permuted pairings that preserve distances are rejected.
pub fn match_level_clusters(a: &ClusterSet, b: &ClusterSet) -> Result<ClusterMatching> {
    search(a, b, true)
}

fn search(a: &ClusterSet, b: &ClusterSet, level: bool) -> Result<ClusterMatching> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::invalid("cluster matching needs two non-empty sets"));
    }
    let (a_top, a_map) = a.largest(SEED_LIMIT);
    let (b_top, b_map) = b.largest(SEED_LIMIT);
    let ctx = Context {
        level,
        dist_a: distance_matrix(&a_top.centroids),
        dist_b: distance_matrix(&b_top.centroids),
        count_a: a_top.total_points() as f64,
        count_b: b_top.total_points() as f64,
        a: &a_top,
        b: &b_top,
    };
    let (na, nb) = (a_top.len(), b_top.len());

    let mut best: Option<Candidate> = None;
    let better = |c: &Candidate, best: &Option<Candidate>| {
        best.as_ref().is_none_or(|b| {
            c.pairs.len() > b.pairs.len() || (c.pairs.len() == b.pairs.len() && c.cost < b.cost - 1e-12)
        })
    };

    if na == 1 || nb == 1 {
        // No distance graph: fall back to the most similar descriptor pair.
        for i in 0..na {
            for j in 0..nb {
                if ctx.compatible(i, j, 1.0) {
                    let c = Candidate {
                        pairs: vec![(i, j)],
                        sigma: 1.0,
                        cost: ctx.descriptor_cost(i, j, 1.0),
                        max_residual: 0.0,
                    };
                    if better(&c, &best) {
                        best = Some(c);
                    }
                }
            }
        }
    }

    for i in 0..na {
        for k in (i + 1)..na {
            for j in 0..nb {
                for l in 0..nb {
                    if j == l || ctx.dist_b[j][l] <= 1e-9 {
                        continue;
                    }
                    let sigma = ctx.dist_a[i][k] / ctx.dist_b[j][l];
                    if !(sigma.is_finite() && sigma > 0.0)
                        || !ctx.compatible(i, j, sigma)
                        || !ctx.compatible(k, l, sigma)
                    {
                        continue;
                    }
                    if ctx.level && ctx.level_residual(&[(i, j), (k, l)], sigma) >= MAX_GRAPH_RESIDUAL {
                        continue;
                    }
                    let c = grow(&ctx, vec![(i, j), (k, l)], sigma);
                    if better(&c, &best) {
                        best = Some(c);
                    }
                }
            }
        }
    }

    let Some(best) = best else {
        return Err(Error::MatchingFailed(format!(
            "no cluster pairing with distance-graph residual below {:.0}%",
            MAX_GRAPH_RESIDUAL * 100.0
        )));
    };
    let mut pairs: Vec<(usize, usize)> = best.pairs.iter().map(|&(i, j)| (a_map[i], b_map[j])).collect();
    pairs.sort_unstable();
    Ok(ClusterMatching {
        unmatched_a: (0..a.len()).filter(|i| !pairs.iter().any(|p| p.0 == *i)).collect(),
        unmatched_b: (0..b.len()).filter(|j| !pairs.iter().any(|p| p.1 == *j)).collect(),
        pairs,
        relative_scale: best.sigma,
        max_residual: best.max_residual,
    })
}

fn grow(ctx: &Context, mut pairs: Vec<(usize, usize)>, mut sigma: f64) -> Candidate {
    let mut cost: f64 = pairs.iter().map(|&(i, j)| ctx.descriptor_cost(i, j, sigma)).sum();
    let mut max_residual: f64 = 0.0;
    loop {
        let mut step: Option<(usize, usize, f64)> = None;
        for i in 0..ctx.a.len() {
            if pairs.iter().any(|p| p.0 == i) {
                continue;
            }
            for j in 0..ctx.b.len() {
                if pairs.iter().any(|p| p.1 == j) || !ctx.compatible(i, j, sigma) {
                    continue;
                }
                let mut r = ctx.residual(&pairs, i, j, sigma);
                if ctx.level {
                    pairs.push((i, j));
                    r = r.max(ctx.level_residual(&pairs, sigma));
                    pairs.pop();
                }
                if r < MAX_GRAPH_RESIDUAL && step.is_none_or(|(_, _, best)| r < best) {
                    step = Some((i, j, r));
                }
            }
        }
        let Some((i, j, r)) = step else {
            break;
        };
        pairs.push((i, j));
        max_residual = max_residual.max(r);
        cost += r + ctx.descriptor_cost(i, j, sigma);
        // Re-estimate the scale from every matched distance.
        let (mut num, mut den) = (0.0, 0.0);
        for (x, &(p, q)) in pairs.iter().enumerate() {
            for &(u, v) in &pairs[x + 1..] {
                num += ctx.dist_a[p][u];
                den += ctx.dist_b[q][v];
            }
        }
        if den > 0.0 {
            sigma = num / den;
        }
    }
    Candidate {
        pairs,
        sigma,
        cost,
        max_residual,
    }
}

/// Metric scale recovered from matched clusters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ScaleFactor(f64);

impl ScaleFactor {
    pub fn new(value: f64) -> Result<Self> {
        if value.is_finite() && value > 0.0 {
            Ok(Self(value))
        } else {
            Err(Error::DegenerateScale(format!(
                "scale must be positive and finite, got {value}"
            )))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// Ratio of the mean inter-centroid distance in `a` to that in `b` over all
/// unordered pairs of matched clusters. Multiplying `b` by it brings it to
/// `a`'s scale.
pub fn scale_factor(a: &ClusterSet, b: &ClusterSet, pairs: &[(usize, usize)]) -> Result<ScaleFactor> {
    if pairs.len() < 2 {
        return Err(Error::invalid(format!(
            "scale needs at least 2 matched clusters, got {}",
            pairs.len()
        )));
    }
    for &(i, j) in pairs {
        if i >= a.len() || j >= b.len() {
            return Err(Error::invalid(format!("matched pair ({i}, {j}) out of range")));
        }
    }
    let (mut sum_a, mut sum_b, mut n) = (0.0, 0.0, 0usize);
    for (x, &(p, q)) in pairs.iter().enumerate() {
        for &(u, v) in &pairs[x + 1..] {
            sum_a += (a.centroids[p] - a.centroids[u]).norm();
            sum_b += (b.centroids[q] - b.centroids[v]).norm();
            n += 1;
        }
    }
    let (mean_a, mean_b) = (sum_a / n as f64, sum_b / n as f64);
    if mean_b <= f64::EPSILON * mean_a.max(1.0) {
        return Err(Error::DegenerateScale("matched centroids coincide".into()));
    }
    ScaleFactor::new(mean_a / mean_b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::RigidTransform;

    fn cube(centre: Point3<f64>, size: Vector3<f64>, n: usize) -> PointCloud {
        let per = (n as f64).cbrt().ceil() as usize;
        let mut pts = Vec::new();
        for i in 0..per {
            for j in 0..per {
                for k in 0..per {
                    let f = |x: usize| x as f64 / (per - 1) as f64 - 0.5;
                    pts.push(centre + Vector3::new(f(i) * size.x, f(j) * size.y, f(k) * size.z));
                }
            }
        }
        PointCloud::from_points(pts)
    }

    fn scene() -> ClusterSet {
        ClusterSet::new(
            vec![
                cube(Point3::new(2.0, 0.0, 0.5), Vector3::new(0.5, 0.5, 1.0), 300),
                cube(Point3::new(0.0, 3.0, 0.4), Vector3::new(0.8, 0.4, 0.8), 400),
                cube(Point3::new(-2.5, -1.0, 0.6), Vector3::new(0.3, 0.3, 1.2), 200),
                cube(Point3::new(1.0, -2.5, 0.3), Vector3::new(0.6, 0.6, 0.6), 250),
            ],
            0.0,
        )
    }

    fn transformed(set: &ClusterSet, order: &[usize], t: &RigidTransform, s: f64) -> ClusterSet {
        let clusters = order
            .iter()
            .map(|&i| set.clusters[i].transformed(t).scaled(s))
            .collect();
        ClusterSet::new(clusters, 0.0)
    }

    #[test]
    fn centroids_are_means() {
        let set = scene();
        for (c, m) in set.clusters.iter().zip(&set.centroids) {
            let mean = c.points.iter().fold(Vector3::zeros(), |a, p| a + p.coords) / c.len() as f64;
            assert!((mean - m.coords).norm() < 1e-9);
        }
    }

    #[test]
    fn identical_sets_match_identity() {
        let set = scene();
        let m = match_clusters(&set, &set).unwrap();
        assert_eq!(m.pairs, vec![(0, 0), (1, 1), (2, 2), (3, 3)]);
        assert!(m.unmatched_a.is_empty() && m.unmatched_b.is_empty());
    }

    #[test]
    fn permuted_transformed_set_recovers_permutation() {
        let set = scene();
        let order = [2, 0, 3, 1];
        let t = RigidTransform::from_scaled_axis(Vector3::new(0.0, 0.0, 1.1), Vector3::new(4.0, -1.0, 0.2));
        let other = transformed(&set, &order, &t, 1.0);
        let m = match_clusters(&set, &other).unwrap();
        let expected: Vec<(usize, usize)> = (0..4)
            .map(|a| (a, order.iter().position(|&o| o == a).unwrap()))
            .collect();
        assert_eq!(m.pairs, expected);
    }

    #[test]
    fn level_matching_rejects_mirror_images() {
        let set = scene();
        let mirrored = ClusterSet::new(
            set.clusters
                .iter()
                .map(|c| PointCloud::from_points(c.points.iter().map(|p| Point3::new(p.x, -p.y, p.z)).collect()))
                .collect(),
            0.0,
        );
        assert_eq!(match_clusters(&set, &mirrored).unwrap().pairs.len(), 4);
        let level = match_level_clusters(&set, &mirrored);
        assert!(level.map_or(true, |m| m.pairs.len() < 4));

        let yawed = transformed(
            &set,
            &[1, 3, 0, 2],
            &RigidTransform::from_scaled_axis(Vector3::new(0.0, 0.0, 2.0), Vector3::new(1.0, 2.0, 0.3)),
            0.5,
        );
        let m = match_level_clusters(&set, &yawed).unwrap();
        assert_eq!(m.pairs, vec![(0, 2), (1, 0), (2, 3), (3, 1)]);
        assert!((m.relative_scale - 2.0).abs() < 1e-9);
    }

    #[test]
    fn level_fit_recovers_yaw() {
        let src = [
            Point3::new(0.0, 0.0, 0.0),
            Point3::new(1.0, 0.0, 0.5),
            Point3::new(0.0, 2.0, 1.0),
        ];
        let truth = RigidTransform::from_scaled_axis(Vector3::new(0.0, 0.0, -0.8), Vector3::new(3.0, 1.0, -0.5));
        let dst: Vec<Point3<f64>> = src.iter().map(|p| truth.apply(p)).collect();
        let fit = level_fit(&src, &dst).unwrap();
        assert!(fit.rotation_angle_to(&truth) < 1e-12);
        assert!(fit.translation_distance(&truth) < 1e-12);
        assert!(level_fit(&src[..1], &dst[..1]).is_none());
    }

    #[test]
    fn spurious_cluster_left_unmatched() {
        let set = scene();
        let mut clusters = set.clusters.clone();
        clusters.push(cube(Point3::new(6.0, 6.0, 0.5), Vector3::new(0.5, 0.5, 0.5), 200));
        let other = ClusterSet::new(clusters, 0.0);
        let m = match_clusters(&set, &other).unwrap();
        assert_eq!(m.pairs.len(), 4);
        assert_eq!(m.unmatched_b, vec![4]);
    }

    #[test]
    fn scale_from_half_size_set() {
        let pts = |s: f64| {
            ClusterSet::new(
                [(0.0, 0.0), (2.0, 0.0), (0.0, 2.0)]
                    .iter()
                    .map(|&(x, y)| PointCloud::from_points(vec![Point3::new(x * s, y * s, 0.0)]))
                    .collect(),
                0.0,
            )
        };
        let (a, b) = (pts(1.0), pts(0.5));
        let pairs = [(0, 0), (1, 1), (2, 2)];
        assert!((scale_factor(&a, &b, &pairs).unwrap().value() - 2.0).abs() < 1e-12);
        assert!((scale_factor(&a, &a, &pairs).unwrap().value() - 1.0).abs() < 1e-12);
        assert!(matches!(
            scale_factor(&a, &b, &pairs[..1]),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn scaled_set_matches_and_gives_scale() {
        let set = scene();
        let other = transformed(&set, &[0, 1, 2, 3], &RigidTransform::rot_z(0.3), 0.37);
        let m = match_clusters(&set, &other).unwrap();
        let s = scale_factor(&set, &other, &m.pairs).unwrap().value();
        assert!((s - 1.0 / 0.37).abs() < 1e-9);
        assert!((m.relative_scale - s).abs() < 1e-9);
    }

    #[test]
    fn coincident_centroids_are_degenerate() {
        let single = |x: f64| PointCloud::from_points(vec![Point3::new(x, 0.0, 0.0)]);
        let a = ClusterSet::new(vec![single(0.0), single(1.0)], 0.0);
        let b = ClusterSet::new(vec![single(3.0), single(3.0)], 0.0);
        assert!(matches!(
            scale_factor(&a, &b, &[(0, 0), (1, 1)]),
            Err(Error::DegenerateScale(_))
        ));
    }

    #[test]
    fn inconsistent_sets_fail() {
        let a = scene();
        // Same descriptors, but one enormous cluster that fits nothing.
        let b = ClusterSet::new(vec![cube(Point3::origin(), Vector3::new(9.0, 9.0, 9.0), 3000)], 0.0);
        assert!(matches!(match_clusters(&a, &b), Err(Error::MatchingFailed(_))));
    }
}
