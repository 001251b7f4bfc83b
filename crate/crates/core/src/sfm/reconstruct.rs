use std::collections::{BTreeMap, HashMap};

use nalgebra::{Point2, Point3};
use serde::{Deserialize, Serialize};

use super::{
    bundle_adjust, decompose_essential, essential_from_fundamental, estimate_fundamental, triangulate_views,
    BundleParams, CameraPose, Correspondence, Observation, RansacParams,
};
use crate::error::{Error, Result};
use crate::geometry::{CameraIntrinsics, RigidTransform};

/// One line of a correspondence file.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairMatch {
    pub view_a: usize,
    pub view_b: usize,
    pub x: f64,
    pub y: f64,
    #[serde(rename = "x'")]
    pub x_prime: f64,
    #[serde(rename = "y'")]
    pub y_prime: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Reconstruction {
    /// Registered views, ascending by view index.
    pub poses: Vec<CameraPose>,
    pub points: Vec<Point3<f64>>,
    pub observations: Vec<Observation>,
    pub rms_px: f64,
    pub bundle_iterations: usize,
}

/// Reprojection gate for freshly triangulated points.
const MAX_TRIANGULATION_ERROR_PX: f64 = 4.0;

struct UnionFind(Vec<usize>);

impl UnionFind {
    fn find(&mut self, mut i: usize) -> usize {
        while self.0[i] != i {
            self.0[i] = self.0[self.0[i]];
            i = self.0[i];
        }
        i
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.0[ra.max(rb)] = ra.min(rb);
        }
    }
}

/// Chains pairwise matches into multi-view tracks. Tracks that claim two
/// different pixels in one view are dropped.
fn build_tracks(matches: &[PairMatch]) -> Vec<BTreeMap<usize, Point2<f64>>> {
    let key = |view: usize, x: f64, y: f64| (view, (x * 1e4).round() as i64, (y * 1e4).round() as i64);
    let mut ids: HashMap<(usize, i64, i64), usize> = HashMap::new();
    let mut nodes: Vec<(usize, Point2<f64>)> = Vec::new();
    let mut node = |view: usize, x: f64, y: f64, nodes: &mut Vec<(usize, Point2<f64>)>| {
        *ids.entry(key(view, x, y)).or_insert_with(|| {
            nodes.push((view, Point2::new(x, y)));
            nodes.len() - 1
        })
    };
    let mut edges = Vec::with_capacity(matches.len());
    for m in matches {
        let a = node(m.view_a, m.x, m.y, &mut nodes);
        let b = node(m.view_b, m.x_prime, m.y_prime, &mut nodes);
        edges.push((a, b));
    }
    let mut uf = UnionFind((0..nodes.len()).collect());
    for (a, b) in edges {
        uf.union(a, b);
    }
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for i in 0..nodes.len() {
        groups.entry(uf.find(i)).or_default().push(i);
    }
    groups
        .into_values()
        .filter_map(|members| {
            let mut track = BTreeMap::new();
            for i in members {
                let (view, px) = nodes[i];
                if track.insert(view, px).is_some() {
                    return None;
                }
            }
            (track.len() >= 2).then_some(track)
        })
        .collect()
}

fn pair_correspondences(matches: &[PairMatch], from: usize, to: usize) -> Vec<Correspondence> {
    matches
        .iter()
        .filter_map(|m| {
            let a = Point2::new(m.x, m.y);
            let b = Point2::new(m.x_prime, m.y_prime);
            if m.view_a == from && m.view_b == to {
                Some(Correspondence::new(a, b))
            } else if m.view_a == to && m.view_b == from {
                Some(Correspondence::new(b, a))
            } else {
                None
            }
        })
        .collect()
}

fn relative_pose(
    matches: &[PairMatch],
    from: usize,
    to: usize,
    k: &CameraIntrinsics,
    ransac: &RansacParams,
) -> Result<RigidTransform> {
    let corrs = pair_correspondences(matches, from, to);
    let est = estimate_fundamental(&corrs, ransac)?;
    let inliers: Vec<Correspondence> = est.inliers.iter().map(|&i| corrs[i]).collect();
    let e = essential_from_fundamental(&est.matrix, k);
    decompose_essential(&e, &inliers, k)
}

fn reprojection_ok(k: &CameraIntrinsics, views: &[(RigidTransform, Point2<f64>)], x: &Point3<f64>) -> bool {
    views.iter().all(|(pose, px)| {
        k.project(&pose.apply(x))
            .is_some_and(|p| (p - px).norm() < MAX_TRIANGULATION_ERROR_PX)
    })
}

/// Incremental reconstruction from pairwise matches: the best-connected pair
/// seeds the model, further views are added from their relative pose to an
/// already registered view with the baseline length fixed by the existing
/// points, and a final bundle adjustment refines everything.
///
/// The reference view sits at the identity; global scale is arbitrary.
pub fn reconstruct(
    matches: &[PairMatch],
    k: &CameraIntrinsics,
    ransac: &RansacParams,
    bundle: &BundleParams,
) -> Result<Reconstruction> {
    let tracks = build_tracks(matches);
    let mut pair_counts: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    for m in matches {
        if m.view_a != m.view_b {
            *pair_counts
                .entry((m.view_a.min(m.view_b), m.view_a.max(m.view_b)))
                .or_default() += 1;
        }
    }
    let (&(reference, second), _) = pair_counts
        .iter()
        .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
        .ok_or_else(|| Error::invalid("no correspondences between distinct views"))?;
    let all_views: Vec<usize> = pair_counts
        .keys()
        .flat_map(|&(a, b)| [a, b])
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .collect();

    let mut poses: BTreeMap<usize, RigidTransform> = BTreeMap::new();
    poses.insert(reference, RigidTransform::identity());
    poses.insert(second, relative_pose(matches, reference, second, k, ransac)?);
    let mut points: Vec<Option<Point3<f64>>> = vec![None; tracks.len()];

    let triangulate_pending = |poses: &BTreeMap<usize, RigidTransform>, points: &mut Vec<Option<Point3<f64>>>| {
        for (t, track) in tracks.iter().enumerate() {
            if points[t].is_some() {
                continue;
            }
            let views: Vec<(RigidTransform, Point2<f64>)> = track
                .iter()
                .filter_map(|(v, px)| poses.get(v).map(|p| (*p, *px)))
                .collect();
            if views.len() < 2 {
                continue;
            }
            if let Ok(x) = triangulate_views(&views, k) {
                if reprojection_ok(k, &views, &x) {
                    points[t] = Some(x);
                }
            }
        }
    };
    triangulate_pending(&poses, &mut points);

    let mut rejected = std::collections::BTreeSet::new();
    loop {
        // Next view: the one seeing most reconstructed points.
        let candidate = all_views
            .iter()
            .filter(|v| !poses.contains_key(v) && !rejected.contains(*v))
            .map(|&v| {
                let seen = tracks
                    .iter()
                    .zip(&points)
                    .filter(|(tr, p)| p.is_some() && tr.contains_key(&v))
                    .count();
                (seen, v)
            })
            .filter(|(seen, _)| *seen >= 3)
            .max_by(|a, b| a.0.cmp(&b.0).then(b.1.cmp(&a.1)));
        let Some((_, view)) = candidate else { break };
        let anchor = poses
            .keys()
            .copied()
            .max_by_key(|&r| {
                (
                    pair_counts.get(&(r.min(view), r.max(view))).copied().unwrap_or(0),
                    std::cmp::Reverse(r),
                )
            })
            .expect("at least one registered view");
        let Ok(rel) = relative_pose(matches, anchor, view, k, ransac) else {
            rejected.insert(view);
            continue;
        };
        let anchor_pose = poses[&anchor];
        let rotation = rel.rotation() * anchor_pose.rotation();
        let base = rel.rotation() * anchor_pose.translation();
        let dir = rel.translation();
        // Solve x_n·(a_z + s·d_z) = a_x + s·d_x (and likewise in y) for s.
        let (mut num, mut den) = (0.0, 0.0);
        for (track, p) in tracks.iter().zip(&points) {
            let (Some(x), Some(px)) = (p, track.get(&view)) else {
                continue;
            };
            let a = rotation * x.coords + base;
            let (xn, yn) = k.to_normalized(px.x, px.y);
            for (c, b) in [
                (dir.x - xn * dir.z, xn * a.z - a.x),
                (dir.y - yn * dir.z, yn * a.z - a.y),
            ] {
                num += c * b;
                den += c * c;
            }
        }
        if den <= 1e-18 || num / den <= 0.0 {
            rejected.insert(view);
            continue;
        }
        poses.insert(view, RigidTransform::from_approx(&rotation, base + dir * (num / den)));
        triangulate_pending(&poses, &mut points);
    }

    // Bundle adjustment with the reference view first (held fixed).
    let order: Vec<usize> = std::iter::once(reference)
        .chain(poses.keys().copied().filter(|&v| v != reference))
        .collect();
    let index_of: HashMap<usize, usize> = order.iter().enumerate().map(|(i, &v)| (v, i)).collect();
    let mut ba_points = Vec::new();
    let mut ba_obs = Vec::new();
    for (track, p) in tracks.iter().zip(&points) {
        let Some(x) = p else { continue };
        let seen: Vec<_> = track.iter().filter(|(v, _)| index_of.contains_key(v)).collect();
        if seen.len() < 2 {
            continue;
        }
        let point = ba_points.len();
        ba_points.push(*x);
        for (v, px) in seen {
            ba_obs.push(Observation {
                point,
                view: index_of[v],
                pixel: *px,
            });
        }
    }
    let ba_poses: Vec<RigidTransform> = order.iter().map(|v| poses[v]).collect();
    let result = bundle_adjust(&ba_poses, &ba_points, &ba_obs, k, bundle)?;
    let rms_px = result.rms_px(ba_obs.len());
    let mut out_poses: Vec<CameraPose> = order
        .iter()
        .zip(&result.poses)
        .map(|(&v, p)| CameraPose::new(v, *p))
        .collect();
    out_poses.sort_by_key(|p| p.view);
    let observations = ba_obs
        .into_iter()
        .map(|o| Observation {
            view: order[o.view],
            ..o
        })
        .collect();
    Ok(Reconstruction {
        poses: out_poses,
        points: result.points,
        observations,
        rms_px,
        bundle_iterations: result.iterations,
    })
}
