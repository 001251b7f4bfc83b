//! Voxel keypoints and fast point-feature histograms.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use nalgebra::{Point3, Vector3};

use super::spatial::{fit_surface, PointIndex};

pub const BINS: usize = 11;
pub const FEATURE_LEN: usize = 3 * BINS;

pub type Feature = [f64; FEATURE_LEN];

/// Centroid of the points falling in each occupied voxel, in voxel order.
pub fn voxel_downsample(points: &[Point3<f64>], voxel: f64) -> Vec<Point3<f64>> {
    let mut cells: BTreeMap<(i64, i64, i64), (Vector3<f64>, usize)> = BTreeMap::new();
    for p in points {
        let key = (
            (p.x / voxel).floor() as i64,
            (p.y / voxel).floor() as i64,
            (p.z / voxel).floor() as i64,
        );
        let e = cells.entry(key).or_insert((Vector3::zeros(), 0));
        e.0 += p.coords;
        e.1 += 1;
    }
    cells.values().map(|(s, n)| Point3::from(s / *n as f64)).collect()
}

/// Normals from `k` nearest neighbours, flipped to face away from the
/// centroid of the whole set so that they are consistent under rigid motion.
pub fn oriented_normals(points: &[Point3<f64>], index: &PointIndex, k: usize) -> Vec<Option<Vector3<f64>>> {
    let Some(centre) = crate::geometry::centroid(points) else {
        return Vec::new();
    };
    points
        .iter()
        .map(|p| {
            let n = fit_surface(points, index.knn(p, k).into_iter().map(|(i, _)| i)).normal?;
            Some(if n.dot(&(p - centre)) < 0.0 { -n } else { n })
        })
        .collect()
}

fn bin(value: f64, lo: f64, hi: f64) -> usize {
    (((value - lo) / (hi - lo) * BINS as f64).floor().max(0.0) as usize).min(BINS - 1)
}

/// Angle-triplet histogram of one point against its neighbours.
fn spfh(
    points: &[Point3<f64>],
    normals: &[Option<Vector3<f64>>],
    i: usize,
    neighbours: &[(usize, f64)],
) -> Option<Feature> {
    let u = normals[i]?;
    let mut h = [0.0; FEATURE_LEN];
    let mut n = 0usize;
    for &(j, _) in neighbours {
        if j == i {
            continue;
        }
        let Some(nt) = normals[j] else { continue };
        let d = points[j] - points[i];
        let dist = d.norm();
        if dist < 1e-12 {
            continue;
        }
        let dir = d / dist;
        let v = u.cross(&dir);
        if v.norm() < 1e-9 {
            continue;
        }
        let v = v.normalize();
        let w = u.cross(&v);
        let alpha = v.dot(&nt);
        let phi = u.dot(&dir);
        let theta = w.dot(&nt).atan2(u.dot(&nt));
        h[bin(alpha, -1.0, 1.0)] += 1.0;
        h[BINS + bin(phi, -1.0, 1.0)] += 1.0;
        h[2 * BINS + bin(theta, -PI, PI)] += 1.0;
        n += 1;
    }
    if n == 0 {
        return None;
    }
    for v in &mut h {
        *v *= 100.0 / n as f64;
    }
    Some(h)
}

/// FPFH-style descriptors: each point's histogram plus the distance-weighted
/// mean of its neighbours' histograms. `None` where no normal is defined.
pub fn fpfh(
    points: &[Point3<f64>],
    normals: &[Option<Vector3<f64>>],
    index: &PointIndex,
    radius: f64,
) -> Vec<Option<Feature>> {
    let neighbourhoods: Vec<Vec<(usize, f64)>> = points.iter().map(|p| index.within(p, radius)).collect();
    let simple: Vec<Option<Feature>> = (0..points.len())
        .map(|i| spfh(points, normals, i, &neighbourhoods[i]))
        .collect();
    (0..points.len())
        .map(|i| {
            let own = simple[i]?;
            let mut acc = [0.0; FEATURE_LEN];
            let mut count = 0usize;
            for &(j, d2) in &neighbourhoods[i] {
                if j == i || d2 <= 0.0 {
                    continue;
                }
                if let Some(h) = &simple[j] {
                    let w = 1.0 / d2.sqrt();
                    for (a, v) in acc.iter_mut().zip(h) {
                        *a += w * v;
                    }
                    count += 1;
                }
            }
            let mut f = own;
            if count > 0 {
                for (x, a) in f.iter_mut().zip(&acc) {
                    *x += a / count as f64;
                }
            }
            for block in f.chunks_mut(BINS) {
                let sum: f64 = block.iter().sum();
                if sum > 0.0 {
                    block.iter_mut().for_each(|v| *v *= 100.0 / sum);
                }
            }
            Some(f)
        })
        .collect()
}

pub fn feature_distance(a: &Feature, b: &Feature) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>()
}

/// Mutual nearest neighbours in feature space, as (source, target) indices.
pub fn mutual_matches(source: &[Option<Feature>], target: &[Option<Feature>]) -> Vec<(usize, usize)> {
    let nearest = |f: &Feature, pool: &[Option<Feature>]| {
        pool.iter()
            .enumerate()
            .filter_map(|(j, g)| g.as_ref().map(|g| (j, feature_distance(f, g))))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .map(|(j, _)| j)
    };
    let forward: Vec<Option<usize>> = source
        .iter()
        .map(|f| f.as_ref().and_then(|f| nearest(f, target)))
        .collect();
    let mut backward: Vec<Option<Option<usize>>> = vec![None; target.len()];
    let mut out = Vec::new();
    for (i, fwd) in forward.iter().enumerate() {
        let Some(j) = *fwd else { continue };
        let back = *backward[j].get_or_insert_with(|| target[j].as_ref().and_then(|g| nearest(g, source)));
        if back == Some(i) {
            out.push((i, j));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::RigidTransform;

    #[test]
    fn voxel_grid_merges_points() {
        let pts = vec![
            Point3::new(0.01, 0.01, 0.01),
            Point3::new(0.03, 0.03, 0.03),
            Point3::new(0.51, 0.0, 0.0),
        ];
        let out = voxel_downsample(&pts, 0.1);
        assert_eq!(out.len(), 2);
        assert!((out[0] - Point3::new(0.02, 0.02, 0.02)).norm() < 1e-12);
    }

    #[test]
    fn features_invariant_under_rigid_motion() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let pts: Vec<Point3<f64>> = (0..400)
            .map(|_| {
                let (a, b) = (rng.gen::<f64>(), rng.gen::<f64>());
                Point3::new(a, b, 0.3 * (3.0 * a).sin() * b)
            })
            .collect();
        let t = RigidTransform::from_scaled_axis(Vector3::new(0.3, -0.2, 0.9), Vector3::new(1.0, 2.0, 3.0));
        let moved: Vec<Point3<f64>> = pts.iter().map(|p| t.apply(p)).collect();
        let describe = |p: &[Point3<f64>]| {
            let index = PointIndex::new(p);
            let normals = oriented_normals(p, &index, 12);
            fpfh(p, &normals, &index, 0.16)
        };
        let (fa, fb) = (describe(&pts), describe(&moved));
        for (a, b) in fa.iter().zip(&fb) {
            if let (Some(a), Some(b)) = (a, b) {
                assert!(feature_distance(a, b) < 1e-6);
            }
        }
        assert!(fa.iter().filter(|f| f.is_some()).count() > 300);
    }
}
