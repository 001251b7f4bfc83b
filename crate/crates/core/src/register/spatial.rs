//! Neighbour queries and local surface estimates.

use std::num::NonZero;

use kiddo::{ImmutableKdTree, SquaredEuclidean};
use nalgebra::{Matrix3, Point3, SymmetricEigen, Vector3};

/// Static 3-D index over a point set.
pub struct PointIndex {
    tree: ImmutableKdTree<f64, 3>,
    len: usize,
}

impl PointIndex {
    pub fn new(points: &[Point3<f64>]) -> Self {
        let coords: Vec<[f64; 3]> = points.iter().map(|p| [p.x, p.y, p.z]).collect();
        let tree = ImmutableKdTree::new_from_slice(&coords).expect("finite coordinates");
        Self {
            tree,
            len: points.len(),
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Index and squared distance of the nearest point.
    pub fn nearest(&self, p: &Point3<f64>) -> Option<(usize, f64)> {
        if self.len == 0 {
            return None;
        }
        let n = self
            .tree
            .query(&[p.x, p.y, p.z])
            .nearest_one::<SquaredEuclidean<f64>>()
            .execute();
        Some((n.item as usize, n.distance))
    }

    /// Points within `radius`, as (index, squared distance).
    pub fn within(&self, p: &Point3<f64>, radius: f64) -> Vec<(usize, f64)> {
        if self.len == 0 {
            return Vec::new();
        }
        self.tree
            .query(&[p.x, p.y, p.z])
            .within::<SquaredEuclidean<f64>>(radius * radius)
            .execute()
            .into_iter()
            .map(|n| (n.item as usize, n.distance))
            .collect()
    }

    /// The `k` nearest points (including `p` itself when it is indexed),
    /// sorted by distance.
    pub fn knn(&self, p: &Point3<f64>, k: usize) -> Vec<(usize, f64)> {
        let k = k.min(self.len);
        let Some(k) = NonZero::new(k) else {
            return Vec::new();
        };
        self.tree
            .query(&[p.x, p.y, p.z])
            .nearest_n::<SquaredEuclidean<f64>>(k)
            .execute()
            .into_iter()
            .map(|n| (n.item as usize, n.distance))
            .collect()
    }
}

/// Plane fit of a neighbourhood.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalSurface {
    /// Unit normal, or `None` when the neighbourhood is too small or linear.
    pub normal: Option<Vector3<f64>>,
    /// Smallest eigenvalue over the eigenvalue sum; 0 for a perfect plane.
    pub curvature: f64,
}

pub fn fit_surface(points: &[Point3<f64>], neighbours: impl Iterator<Item = usize>) -> LocalSurface {
    let idx: Vec<usize> = neighbours.collect();
    if idx.len() < 3 {
        return LocalSurface {
            normal: None,
            curvature: 0.0,
        };
    }
    let n = idx.len() as f64;
    let mean = idx.iter().fold(Vector3::zeros(), |a, &i| a + points[i].coords) / n;
    let cov = idx.iter().fold(Matrix3::zeros(), |c, &i| {
        let d = points[i].coords - mean;
        c + d * d.transpose()
    }) / n;
    let eig = SymmetricEigen::new(cov);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let (l0, l1, l2) = (
        eig.eigenvalues[order[0]].max(0.0),
        eig.eigenvalues[order[1]].max(0.0),
        eig.eigenvalues[order[2]].max(0.0),
    );
    let sum = l0 + l1 + l2;
    // A neighbourhood spread along a single line has no defined normal.
    if sum <= 1e-18 || l1 <= 1e-4 * l2 {
        return LocalSurface {
            normal: None,
            curvature: 0.0,
        };
    }
    LocalSurface {
        normal: Some(eig.eigenvectors.column(order[0]).normalize()),
        curvature: l0 / sum,
    }
}

/// Per-point surface estimates from the `k` nearest neighbours.
pub fn estimate_surfaces(points: &[Point3<f64>], index: &PointIndex, k: usize) -> Vec<LocalSurface> {
    points
        .iter()
        .map(|p| fit_surface(points, index.knn(p, k).into_iter().map(|(i, _)| i)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn queries_agree_with_brute_force() {
        let pts: Vec<Point3<f64>> = (0..200)
            .map(|i| {
                let f = i as f64;
                Point3::new((f * 0.37).sin() * 3.0, (f * 0.11).cos() * 2.0, (f * 0.05).sin())
            })
            .collect();
        let index = PointIndex::new(&pts);
        let q = Point3::new(0.3, -0.2, 0.1);
        let brute: Vec<f64> = pts.iter().map(|p| (p - q).norm_squared()).collect();
        let best = brute.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!((index.nearest(&q).unwrap().1 - best).abs() < 1e-12);
        let within = index.within(&q, 1.0);
        assert_eq!(within.len(), brute.iter().filter(|d| **d <= 1.0).count());
        assert_eq!(index.knn(&q, 7).len(), 7);
        assert!(PointIndex::new(&[]).nearest(&q).is_none());
    }

    #[test]
    fn plane_normal_and_degenerate_line() {
        let plane: Vec<Point3<f64>> = (0..25)
            .map(|i| Point3::new((i % 5) as f64, (i / 5) as f64, 2.0))
            .collect();
        let s = fit_surface(&plane, 0..25);
        assert!((s.normal.unwrap().z.abs() - 1.0).abs() < 1e-12);
        assert!(s.curvature < 1e-12);
        let line: Vec<Point3<f64>> = (0..10).map(|i| Point3::new(i as f64, 0.0, 0.0)).collect();
        assert!(fit_surface(&line, 0..10).normal.is_none());
    }
}
