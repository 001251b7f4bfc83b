use nalgebra::Point3;

use super::spatial::PointIndex;

/// Statistical outlier removal: drops points whose mean distance to their
/// `k` nearest neighbours exceeds the global mean of that statistic by more
/// than `std_ratio` standard deviations. Returns the kept indices.
pub fn statistical_outlier_filter(points: &[Point3<f64>], k: usize, std_ratio: f64) -> Vec<usize> {
    if points.len() <= k || k == 0 {
        return (0..points.len()).collect();
    }
    let index = PointIndex::new(points);
    let mean_dist: Vec<f64> = points
        .iter()
        .map(|p| {
            let nn = index.knn(p, k + 1);
            nn.iter().skip(1).map(|(_, d2)| d2.sqrt()).sum::<f64>() / k as f64
        })
        .collect();
    let n = mean_dist.len() as f64;
    let mu = mean_dist.iter().sum::<f64>() / n;
    let sigma = (mean_dist.iter().map(|d| (d - mu).powi(2)).sum::<f64>() / n).sqrt();
    let limit = mu + std_ratio * sigma;
    (0..points.len()).filter(|&i| mean_dist[i] <= limit).collect()
}
