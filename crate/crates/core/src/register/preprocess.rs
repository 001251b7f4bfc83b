//! Removal of ceiling, ground and wall points ahead of object clustering.

use nalgebra::{Point3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::features::voxel_downsample;
use super::spatial::{estimate_surfaces, PointIndex};
use crate::error::{Error, Result};
use crate::geometry::PointCloud;

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PreprocessParams {
    /// Points at or above this height are dropped.
    pub ceiling_height: f64,
    /// Ground raster cell size.
    pub cell: f64,
    /// Allowed terrain rise per metre of opening window.
    pub slope_tol: f64,
    /// A normal within this many degrees of horizontal marks a wall candidate.
    pub wall_normal_tol_deg: f64,
    /// Largest opening window edge, metres.
    pub max_window: f64,
    /// Height above the ground surface still counted as ground.
    pub elevation_threshold: f64,
    /// Ground patches smaller than this (m²) are kept as objects.
    pub min_ground_area: f64,
    /// Point-to-plane distance for wall plane inliers.
    pub plane_distance: f64,
    /// Wall planes need this fraction of the wall stage input.
    pub min_wall_fraction: f64,
    /// Contiguous horizontal run a wall must span, metres.
    pub min_wall_extent: f64,
    pub normal_neighbours: usize,
    pub seed: u64,
}

impl Default for PreprocessParams {
    fn default() -> Self {
        Self {
            ceiling_height: 2.3,
            cell: 0.1,
            slope_tol: 0.15,
            wall_normal_tol_deg: 15.0,
            max_window: 3.0,
            elevation_threshold: 0.03,
            min_ground_area: 1.0,
            plane_distance: 0.04,
            min_wall_fraction: 0.05,
            min_wall_extent: 1.5,
            normal_neighbours: 20,
            seed: 7,
        }
    }
}

impl PreprocessParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            self.ceiling_height,
            self.cell,
            self.slope_tol,
            self.wall_normal_tol_deg,
            self.max_window,
            self.elevation_threshold,
            self.plane_distance,
            self.min_wall_extent,
        ];
        if positive.iter().any(|v| !(v.is_finite() && *v > 0.0)) || self.wall_normal_tol_deg >= 90.0 {
            return Err(Error::invalid("preprocessing parameters must be positive and finite"));
        }
        if self.normal_neighbours < 3 {
            return Err(Error::invalid("normal estimation needs at least 3 neighbours"));
        }
        Ok(())
    }
}

/// Ceiling, ground and wall removal in that order. Returns the indices of the
/// retained points in the input cloud.
pub fn preprocess_indices(cloud: &PointCloud, params: &PreprocessParams) -> Result<Vec<usize>> {
    params.validate()?;
    let below: Vec<usize> = (0..cloud.len())
        .filter(|&i| cloud.points[i].z < params.ceiling_height)
        .collect();
    let pts: Vec<Point3<f64>> = below.iter().map(|&i| cloud.points[i]).collect();
    let ground = ground_mask(&pts, params);
    let remaining: Vec<usize> = (0..pts.len()).filter(|&i| !ground[i]).collect();
    let rem_pts: Vec<Point3<f64>> = remaining.iter().map(|&i| pts[i]).collect();
    let wall = wall_mask(&rem_pts, params);
    Ok(remaining
        .iter()
        .zip(&wall)
        .filter(|(_, w)| !**w)
        .map(|(&i, _)| below[i])
        .collect())
}

pub fn preprocess_cloud(cloud: &PointCloud, params: &PreprocessParams) -> Result<PointCloud> {
    Ok(cloud.select(&preprocess_indices(cloud, params)?))
}

struct Grid {
    origin_x: f64,
    origin_y: f64,
    cell: f64,
    cols: usize,
    rows: usize,
}

impl Grid {
    fn cell_of(&self, p: &Point3<f64>) -> usize {
        let c = (((p.x - self.origin_x) / self.cell) as usize).min(self.cols - 1);
        let r = (((p.y - self.origin_y) / self.cell) as usize).min(self.rows - 1);
        r * self.cols + c
    }
}

/// Min or max over a square window, ignoring empty (NaN) cells.
fn window_filter(surface: &[f64], cols: usize, rows: usize, radius: usize, take_min: bool) -> Vec<f64> {
    let pick = |a: f64, b: f64| {
        if a.is_nan() {
            b
        } else if b.is_nan() {
            a
        } else if take_min {
            a.min(b)
        } else {
            a.max(b)
        }
    };
    let mut rowpass = vec![f64::NAN; surface.len()];
    for r in 0..rows {
        for c in 0..cols {
            let lo = c.saturating_sub(radius);
            let hi = (c + radius).min(cols - 1);
            rowpass[r * cols + c] = (lo..=hi).fold(f64::NAN, |acc, k| pick(acc, surface[r * cols + k]));
        }
    }
    let mut out = vec![f64::NAN; surface.len()];
    for r in 0..rows {
        let lo = r.saturating_sub(radius);
        let hi = (r + radius).min(rows - 1);
        for c in 0..cols {
            out[r * cols + c] = (lo..=hi).fold(f64::NAN, |acc, k| pick(acc, rowpass[k * cols + c]));
        }
    }
    out
}

/// Simplified morphological ground filter on a minimum-height raster.
fn ground_mask(pts: &[Point3<f64>], params: &PreprocessParams) -> Vec<bool> {
    if pts.is_empty() {
        return Vec::new();
    }
    let (mut min_x, mut min_y, mut max_x, mut max_y) = (f64::MAX, f64::MAX, f64::MIN, f64::MIN);
    for p in pts {
        min_x = min_x.min(p.x);
        min_y = min_y.min(p.y);
        max_x = max_x.max(p.x);
        max_y = max_y.max(p.y);
    }
    let grid = Grid {
        origin_x: min_x,
        origin_y: min_y,
        cell: params.cell,
        cols: ((max_x - min_x) / params.cell) as usize + 1,
        rows: ((max_y - min_y) / params.cell) as usize + 1,
    };
    let mut surface = vec![f64::NAN; grid.cols * grid.rows];
    let cells: Vec<usize> = pts.iter().map(|p| grid.cell_of(p)).collect();
    for (p, &c) in pts.iter().zip(&cells) {
        if surface[c].is_nan() || p.z < surface[c] {
            surface[c] = p.z;
        }
    }

    // Progressive opening: a cell is an object cell once it stands higher
    // above the opened surface than the window's slope allowance.
    let mut object = vec![false; surface.len()];
    let mut opened = surface.clone();
    let max_radius = ((params.max_window / params.cell / 2.0).ceil() as usize).max(1);
    for radius in 1..=max_radius {
        let eroded = window_filter(&opened, grid.cols, grid.rows, radius, true);
        let next = window_filter(&eroded, grid.cols, grid.rows, radius, false);
        let allowance = params.slope_tol * radius as f64 * params.cell + params.elevation_threshold;
        for i in 0..surface.len() {
            if !surface[i].is_nan() && !next[i].is_nan() && surface[i] - next[i] > allowance {
                object[i] = true;
            }
        }
        opened = next;
    }

    let ground_level: Vec<f64> = (0..surface.len())
        .map(|i| if object[i] { opened[i] } else { surface[i] })
        .collect();
    let tolerance = params.elevation_threshold + params.slope_tol * params.cell;
    let near: Vec<bool> = pts
        .iter()
        .zip(&cells)
        .map(|(p, &c)| !ground_level[c].is_nan() && p.z - ground_level[c] <= tolerance)
        .collect();

    // Only large connected ground patches count; a small flat underside
    // is part of an object.
    let mut ground_cell = vec![false; surface.len()];
    for (&c, &n) in cells.iter().zip(&near) {
        if n && !object[c] {
            ground_cell[c] = true;
        }
    }
    let min_area = params.min_ground_area;
    let mut keep_cell = vec![false; surface.len()];
    let mut seen = vec![false; surface.len()];
    for start in 0..surface.len() {
        if !ground_cell[start] || seen[start] {
            continue;
        }
        let mut component = vec![start];
        seen[start] = true;
        let mut head = 0;
        while head < component.len() {
            let i = component[head];
            head += 1;
            let (r, c) = (i / grid.cols, i % grid.cols);
            // Two-cell reach bridges raster holes left by sparse sampling.
            for rr in r.saturating_sub(2)..=(r + 2).min(grid.rows - 1) {
                for cc in c.saturating_sub(2)..=(c + 2).min(grid.cols - 1) {
                    let j = rr * grid.cols + cc;
                    if ground_cell[j] && !seen[j] {
                        seen[j] = true;
                        component.push(j);
                    }
                }
            }
        }
        if component_area(&component, &grid) >= min_area {
            for i in component {
                keep_cell[i] = true;
            }
        }
    }
    // Object cells inside a large ground patch (under boxes) still carry the
    // floor returns around the object's footprint.
    let mut large_patch = keep_cell.clone();
    for i in 0..surface.len() {
        if object[i] {
            let (r, c) = (i / grid.cols, i % grid.cols);
            let neighbours = [
                (r > 0).then(|| i - grid.cols),
                (r + 1 < grid.rows).then(|| i + grid.cols),
                (c > 0).then(|| i - 1),
                (c + 1 < grid.cols).then(|| i + 1),
            ];
            large_patch[i] = neighbours.iter().flatten().any(|&j| keep_cell[j]);
        }
    }
    near.iter().zip(&cells).map(|(&n, &c)| n && large_patch[c]).collect()
}

/// Bounding-box area of a set of raster cells.
fn component_area(cells: &[usize], grid: &Grid) -> f64 {
    let (mut r0, mut r1, mut c0, mut c1) = (usize::MAX, 0, usize::MAX, 0);
    for &i in cells {
        let (r, c) = (i / grid.cols, i % grid.cols);
        r0 = r0.min(r);
        r1 = r1.max(r);
        c0 = c0.min(c);
        c1 = c1.max(c);
    }
    ((r1 - r0 + 1) * (c1 - c0 + 1)) as f64 * grid.cell * grid.cell
}

/// Points on large vertical planes, found by repeated RANSAC.
fn wall_mask(pts: &[Point3<f64>], params: &PreprocessParams) -> Vec<bool> {
    let mut wall = vec![false; pts.len()];
    if pts.len() < params.normal_neighbours {
        return wall;
    }
    let normals = decimated_normals(pts, params.cell, params.normal_neighbours);
    let horizontal_limit = params.wall_normal_tol_deg.to_radians().sin();
    let agreement = params.wall_normal_tol_deg.to_radians().cos();
    let mut candidates: Vec<usize> = (0..pts.len())
        .filter(|&i| normals[i].is_some_and(|n| n.z.abs() < horizontal_limit))
        .collect();
    let min_inliers = ((params.min_wall_fraction * pts.len() as f64).ceil() as usize).max(3);
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);

    for _ in 0..16 {
        if candidates.len() < min_inliers {
            break;
        }
        let mut best: Option<(Vector3<f64>, f64, Vec<usize>)> = None;
        for _ in 0..400 {
            let a = pts[candidates[rng.gen_range(0..candidates.len())]];
            let b = pts[candidates[rng.gen_range(0..candidates.len())]];
            let along = Vector3::new(b.x - a.x, b.y - a.y, 0.0);
            if along.norm() < 0.2 {
                continue;
            }
            let normal = Vector3::new(-along.y, along.x, 0.0).normalize();
            let offset = normal.dot(&a.coords);
            let inliers: Vec<usize> = candidates
                .iter()
                .copied()
                .filter(|&i| {
                    (normal.dot(&pts[i].coords) - offset).abs() < params.plane_distance
                        && normals[i].is_some_and(|n| n.dot(&normal).abs() > agreement)
                })
                .collect();
            if best.as_ref().is_none_or(|(_, _, b)| inliers.len() > b.len()) {
                best = Some((normal, offset, inliers));
            }
        }
        let Some((normal, offset, inliers)) = best else {
            break;
        };
        if inliers.len() < min_inliers {
            break;
        }
        let tangent = Vector3::new(-normal.y, normal.x, 0.0);
        let spans = long_runs(pts, &inliers, &tangent, params.min_wall_extent);
        if spans.is_empty() {
            // The dominant plane is a short face; no larger wall remains.
            break;
        }
        // Everything on the plane within a wall's span goes, including
        // corner points whose normals blend two walls.
        for (i, p) in pts.iter().enumerate() {
            let along = tangent.dot(&p.coords);
            if (normal.dot(&p.coords) - offset).abs() < params.plane_distance
                && spans.iter().any(|(lo, hi)| along >= *lo && along <= *hi)
            {
                wall[i] = true;
            }
        }
        candidates.retain(|i| !wall[*i]);
    }
    wall
}

/// Plane-fit normals computed on a voxel-decimated copy and carried back to
/// each point from its nearest decimated point. Scan lines of a sparse
/// multi-beam sensor make raw nearest neighbours collinear.
pub(crate) fn decimated_normals(pts: &[Point3<f64>], voxel: f64, neighbours: usize) -> Vec<Option<Vector3<f64>>> {
    let coarse = voxel_downsample(pts, voxel);
    let index = PointIndex::new(&coarse);
    let surfaces = estimate_surfaces(&coarse, &index, neighbours);
    pts.iter()
        .map(|p| index.nearest(p).and_then(|(j, _)| surfaces[j].normal))
        .collect()
}

/// Gap-free horizontal runs of `inliers` along `tangent` at least
/// `min_extent` long, as coordinate intervals.
fn long_runs(pts: &[Point3<f64>], inliers: &[usize], tangent: &Vector3<f64>, min_extent: f64) -> Vec<(f64, f64)> {
    const MAX_GAP: f64 = 0.3;
    let mut along: Vec<(f64, usize)> = inliers.iter().map(|&i| (tangent.dot(&pts[i].coords), i)).collect();
    along.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut out = Vec::new();
    let mut start = 0;
    for k in 1..=along.len() {
        if k == along.len() || along[k].0 - along[k - 1].0 > MAX_GAP {
            if along[k - 1].0 - along[start].0 >= min_extent {
                out.push((along[start].0 - MAX_GAP, along[k - 1].0 + MAX_GAP));
            }
            start = k;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Clone, Copy, PartialEq, Debug)]
    enum Label {
        Shell,
        Object,
    }

    fn grid_face(
        out: &mut Vec<(Point3<f64>, Label)>,
        origin: Point3<f64>,
        u: Vector3<f64>,
        v: Vector3<f64>,
        step: f64,
        label: Label,
    ) {
        let (nu, nv) = ((u.norm() / step) as usize, (v.norm() / step) as usize);
        for i in 0..=nu {
            for j in 0..=nv {
                let p = origin + u * (i as f64 / nu as f64) + v * (j as f64 / nv as f64);
                out.push((p, label));
            }
        }
    }

    fn box_faces(out: &mut Vec<(Point3<f64>, Label)>, min: Point3<f64>, size: Vector3<f64>, step: f64) {
        let (x, y, z) = (Vector3::x() * size.x, Vector3::y() * size.y, Vector3::z() * size.z);
        grid_face(out, min, x, z, step, Label::Object);
        grid_face(out, min + y, x, z, step, Label::Object);
        grid_face(out, min, y, z, step, Label::Object);
        grid_face(out, min + x, y, z, step, Label::Object);
        grid_face(out, min + z, x, y, step, Label::Object);
    }

    fn room() -> Vec<(Point3<f64>, Label)> {
        let mut pts = Vec::new();
        let (w, d, h, step) = (6.0, 5.0, 2.5, 0.05);
        let o = Point3::origin();
        grid_face(&mut pts, o, Vector3::x() * w, Vector3::y() * d, step, Label::Shell);
        grid_face(
            &mut pts,
            o + Vector3::z() * h,
            Vector3::x() * w,
            Vector3::y() * d,
            step,
            Label::Shell,
        );
        grid_face(&mut pts, o, Vector3::x() * w, Vector3::z() * h, step, Label::Shell);
        grid_face(
            &mut pts,
            o + Vector3::y() * d,
            Vector3::x() * w,
            Vector3::z() * h,
            step,
            Label::Shell,
        );
        grid_face(&mut pts, o, Vector3::y() * d, Vector3::z() * h, step, Label::Shell);
        grid_face(
            &mut pts,
            o + Vector3::x() * w,
            Vector3::y() * d,
            Vector3::z() * h,
            step,
            Label::Shell,
        );
        box_faces(&mut pts, Point3::new(1.5, 1.0, 0.0), Vector3::new(0.8, 0.6, 1.2), 0.03);
        box_faces(&mut pts, Point3::new(3.5, 3.0, 0.0), Vector3::new(0.5, 0.9, 0.9), 0.03);
        pts
    }

    #[test]
    fn room_leaves_only_boxes() {
        let labelled = room();
        let cloud = PointCloud::from_points(labelled.iter().map(|(p, _)| *p).collect());
        let kept = preprocess_indices(&cloud, &PreprocessParams::default()).unwrap();
        let count = |l: Label| labelled.iter().filter(|(_, x)| *x == l).count();
        let kept_of = |l: Label| kept.iter().filter(|&&i| labelled[i].1 == l).count();
        let object_retained = kept_of(Label::Object) as f64 / count(Label::Object) as f64;
        let shell_removed = 1.0 - kept_of(Label::Shell) as f64 / count(Label::Shell) as f64;
        assert!(object_retained > 0.95, "object retained {object_retained}");
        assert!(shell_removed > 0.99, "shell removed {shell_removed}");
    }

    #[test]
    fn floating_blob_loses_no_ground() {
        let pts: Vec<Point3<f64>> = (0..500)
            .map(|i| {
                let f = i as f64;
                Point3::new(
                    1.0 + 0.2 * (f * 0.7).sin(),
                    1.0 + 0.2 * (f * 1.3).cos(),
                    1.0 + 0.2 * (f * 0.3).sin(),
                )
            })
            .collect();
        let params = PreprocessParams::default();
        assert!(ground_mask(&pts, &params).iter().all(|g| !g));
    }

    #[test]
    fn empty_cloud_is_empty() {
        let out = preprocess_cloud(&PointCloud::default(), &PreprocessParams::default()).unwrap();
        assert!(out.is_empty());
    }

    #[test]
    fn invalid_parameters_rejected() {
        let params = PreprocessParams {
            cell: 0.0,
            ..PreprocessParams::default()
        };
        assert!(preprocess_cloud(&PointCloud::default(), &params).is_err());
    }
}
