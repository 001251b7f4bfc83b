use super::clusters::ClusterSet;
use super::spatial::PointIndex;
use crate::error::{Error, Result};
use crate::geometry::PointCloud;

/// DBSCAN output: the clusters plus per-point labels.
#[derive(Debug, Clone)]
pub struct Clustering {
    pub clusters: ClusterSet,
    /// Cluster id per input point, `None` for noise.
    pub labels: Vec<Option<usize>>,
    pub noise: Vec<usize>,
}

/// Density-based clustering. Clusters are numbered in order of their lowest
/// core point index, and a border point joins the first cluster reaching it.
pub fn dbscan(cloud: &PointCloud, eps: f64, min_pts: usize) -> Result<Clustering> {
    if !(eps.is_finite() && eps > 0.0) || min_pts == 0 {
        return Err(Error::invalid(format!(
            "dbscan needs eps > 0 and min_pts >= 1 (eps={eps}, min_pts={min_pts})"
        )));
    }
    let pts = &cloud.points;
    let index = PointIndex::new(pts);
    let neighbourhoods: Vec<Vec<usize>> = pts
        .iter()
        .map(|p| {
            let mut n: Vec<usize> = index.within(p, eps).into_iter().map(|(i, _)| i).collect();
            n.sort_unstable();
            n
        })
        .collect();
    let core: Vec<bool> = neighbourhoods.iter().map(|n| n.len() >= min_pts).collect();

    let mut labels: Vec<Option<usize>> = vec![None; pts.len()];
    let mut members: Vec<Vec<usize>> = Vec::new();
    for start in 0..pts.len() {
        if !core[start] || labels[start].is_some() {
            continue;
        }
        let id = members.len();
        let mut cluster = vec![start];
        labels[start] = Some(id);
        let mut head = 0;
        while head < cluster.len() {
            let i = cluster[head];
            head += 1;
            if !core[i] {
                continue;
            }
            for &j in &neighbourhoods[i] {
                if labels[j].is_none() {
                    labels[j] = Some(id);
                    cluster.push(j);
                }
            }
        }
        cluster.sort_unstable();
        members.push(cluster);
    }
    let noise = (0..pts.len()).filter(|&i| labels[i].is_none()).collect();
    let clouds = members.iter().map(|m| cloud.select(m)).collect();
    let floor = pts.iter().map(|p| p.z).fold(f64::INFINITY, f64::min);
    Ok(Clustering {
        clusters: ClusterSet::new(clouds, floor),
        labels,
        noise,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Point3;
    use proptest::prelude::*;

    fn blob(centre: Point3<f64>, n: usize, spread: f64) -> Vec<Point3<f64>> {
        (0..n)
            .map(|i| {
                let f = i as f64;
                centre + nalgebra::Vector3::new((f * 0.9).sin(), (f * 1.7).cos(), (f * 0.4).sin()) * spread
            })
            .collect()
    }

    #[test]
    fn two_separated_blobs() {
        let eps = 0.1;
        let mut pts = blob(Point3::origin(), 100, 0.05);
        pts.extend(blob(Point3::new(10.0 * eps + 0.1, 0.0, 0.0), 100, 0.05));
        let out = dbscan(&PointCloud::from_points(pts), eps, 5).unwrap();
        assert_eq!(out.clusters.len(), 2);
        assert!(out.noise.is_empty());
        assert_eq!(out.clusters.clusters[0].len(), 100);
    }

    #[test]
    fn chain_is_one_cluster() {
        let pts: Vec<Point3<f64>> = (0..50).map(|i| Point3::new(i as f64 * 0.09, 0.0, 0.0)).collect();
        let out = dbscan(&PointCloud::from_points(pts), 0.1, 2).unwrap();
        assert_eq!(out.clusters.len(), 1);
    }

    #[test]
    fn isolated_point_is_noise() {
        let mut pts = blob(Point3::origin(), 30, 0.02);
        pts.push(Point3::new(5.0, 5.0, 5.0));
        let out = dbscan(&PointCloud::from_points(pts), 0.1, 5).unwrap();
        assert_eq!(out.noise, vec![30]);
        assert_eq!(out.labels[30], None);
    }

    #[test]
    fn bad_parameters_rejected() {
        assert!(dbscan(&PointCloud::default(), 0.0, 5).is_err());
        assert!(dbscan(&PointCloud::default(), 0.1, 0).is_err());
    }

    proptest! {
        #[test]
        fn labels_partition_the_cloud(
            coords in prop::collection::vec((-2.0f64..2.0, -2.0f64..2.0, -0.5f64..0.5), 1..200),
            eps in 0.05f64..0.6,
            min_pts in 1usize..8,
        ) {
            let pts: Vec<Point3<f64>> = coords.iter().map(|&(x, y, z)| Point3::new(x, y, z)).collect();
            let out = dbscan(&PointCloud::from_points(pts.clone()), eps, min_pts).unwrap();
            let clustered: usize = out.clusters.clusters.iter().map(|c| c.len()).sum();
            prop_assert_eq!(clustered + out.noise.len(), pts.len());
            for (i, label) in out.labels.iter().enumerate() {
                match label {
                    Some(c) => prop_assert!(out.clusters.clusters[*c].points.contains(&pts[i])),
                    None => prop_assert!(out.noise.contains(&i)),
                }
            }
        }
    }
}
