//! Horizontal coverage of a ring of cameras offset from the LiDAR centre.
//!
//! Each camera sees a planar wedge with its apex at the camera centre. Two
//! azimuthally adjacent wedges overlap beyond the point where their facing
//! boundary rays cross; the distance of that point from the LiDAR centre is
//! the pair's intersection radius.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One camera of the horizontal layout.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LayoutCamera {
    /// Viewing direction, degrees counter-clockwise from the LiDAR x axis.
    pub azimuth_deg: f64,
    /// Distance of the camera centre from the LiDAR centre along its azimuth.
    pub offset_m: f64,
    pub half_fov_deg: f64,
}

impl LayoutCamera {
    pub fn new(azimuth_deg: f64, offset_m: f64, half_fov_deg: f64) -> Self {
        Self {
            azimuth_deg,
            offset_m,
            half_fov_deg,
        }
    }

    fn apex(&self) -> [f64; 2] {
        let a = self.azimuth_deg.to_radians();
        [self.offset_m * a.cos(), self.offset_m * a.sin()]
    }

    /// Whether the horizontal point `q` lies inside this camera's wedge.
    pub fn covers(&self, q: [f64; 2]) -> bool {
        let p = self.apex();
        let d = [q[0] - p[0], q[1] - p[1]];
        let len = d[0].hypot(d[1]);
        if len < 1e-12 {
            return true;
        }
        let a = self.azimuth_deg.to_radians();
        let cos = (d[0] * a.cos() + d[1] * a.sin()) / len;
        cos >= self.half_fov_deg.to_radians().cos() - 1e-12
    }
}

/// Ordered camera layout; azimuths are kept sorted and distinct.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<LayoutCamera>", into = "Vec<LayoutCamera>")]
pub struct CameraLayout {
    cameras: Vec<LayoutCamera>,
}

impl CameraLayout {
    pub fn new(mut cameras: Vec<LayoutCamera>) -> Result<Self> {
        if cameras.is_empty() {
            return Err(Error::invalid("camera layout needs at least one camera"));
        }
        for c in &cameras {
            if !(0.0..360.0).contains(&c.azimuth_deg) {
                return Err(Error::invalid(format!("azimuth {} outside [0, 360)", c.azimuth_deg)));
            }
            if !(c.offset_m >= 0.0 && c.offset_m.is_finite()) {
                return Err(Error::invalid(format!("camera offset {} must be >= 0", c.offset_m)));
            }
            if !(c.half_fov_deg > 0.0 && c.half_fov_deg < 90.0) {
                return Err(Error::invalid(format!("half FOV {} outside (0, 90)", c.half_fov_deg)));
            }
        }
        cameras.sort_by(|a, b| a.azimuth_deg.total_cmp(&b.azimuth_deg));
        if cameras.windows(2).any(|w| w[0].azimuth_deg == w[1].azimuth_deg) {
            return Err(Error::invalid("camera azimuths must be distinct"));
        }
        Ok(Self { cameras })
    }

    pub fn cameras(&self) -> &[LayoutCamera] {
        &self.cameras
    }

    /// Adjacent pairs in counter-clockwise order, wrapping around.
    pub fn adjacent_pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let n = self.cameras.len();
        let count = if n < 2 { 0 } else { n };
        (0..count).map(move |i| (i, (i + 1) % n))
    }

    pub fn covers(&self, q: [f64; 2]) -> bool {
        self.cameras.iter().any(|c| c.covers(q))
    }
}

impl TryFrom<Vec<LayoutCamera>> for CameraLayout {
    type Error = Error;
    fn try_from(v: Vec<LayoutCamera>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<CameraLayout> for Vec<LayoutCamera> {
    fn from(l: CameraLayout) -> Self {
        l.cameras
    }
}

/// A range in metres, or no finite range at all.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Radius {
    Finite(f64),
    Unbounded,
}

impl Radius {
    pub fn finite(&self) -> Option<f64> {
        match self {
            Radius::Finite(r) => Some(*r),
            Radius::Unbounded => None,
        }
    }

    pub fn is_unbounded(&self) -> bool {
        matches!(self, Radius::Unbounded)
    }
}

impl Serialize for Radius {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Radius::Finite(r) => s.serialize_f64(*r),
            Radius::Unbounded => s.serialize_str("unbounded"),
        }
    }
}

impl<'de> Deserialize<'de> for Radius {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(f64),
            Tag(String),
        }
        match Repr::deserialize(d)? {
            Repr::Num(r) => Ok(Radius::Finite(r)),
            Repr::Tag(t) if t == "unbounded" => Ok(Radius::Unbounded),
            Repr::Tag(t) => Err(serde::de::Error::custom(format!(
                "expected number or \"unbounded\", got {t:?}"
            ))),
        }
    }
}

/// Closed angular interval in degrees; `end_deg` may exceed 360 when the
/// interval wraps through the x axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AngularInterval {
    pub start_deg: f64,
    pub end_deg: f64,
}

impl AngularInterval {
    pub fn width_deg(&self) -> f64 {
        self.end_deg - self.start_deg
    }

    pub fn contains(&self, angle_deg: f64) -> bool {
        let rel = (angle_deg - self.start_deg).rem_euclid(360.0);
        rel <= self.width_deg()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairRadius {
    pub azimuth_from_deg: f64,
    pub azimuth_to_deg: f64,
    pub radius_m: Radius,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub pairwise_radii: Vec<PairRadius>,
    pub min_full_coverage_radius: Radius,
    pub query_radius_m: Option<f64>,
    pub blind_sectors: Vec<AngularInterval>,
}

#[inline]
fn cross(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[1] - a[1] * b[0]
}

/// Radius at which the facing FOV boundaries of `first` and the next camera
/// counter-clockwise, `second`, intersect.
///
/// Works in the frame where `first` looks along +x. The boundaries must
/// converge (`u₁ × u₂ < 0` with this parameterisation) and meet in front of
/// both cameras; otherwise the pair never closes its gap.
pub fn intersection_radius(first: &LayoutCamera, second: &LayoutCamera) -> Radius {
    let alpha = (second.azimuth_deg - first.azimuth_deg).rem_euclid(360.0).to_radians();
    let (t1, t2) = (first.half_fov_deg.to_radians(), second.half_fov_deg.to_radians());
    let p1 = [first.offset_m, 0.0];
    let p2 = [second.offset_m * alpha.cos(), second.offset_m * alpha.sin()];
    let u1 = [t1.cos(), t1.sin()];
    let u2 = [(alpha - t2).cos(), (alpha - t2).sin()];
    let denom = cross(u1, u2);
    let gap = [p2[0] - p1[0], p2[1] - p1[1]];
    if denom.abs() < 1e-12 {
        // Parallel boundaries only close the gap when they coincide.
        return if cross(gap, u1).abs() < 1e-12 && p1 == [0.0, 0.0] && p2 == [0.0, 0.0] {
            Radius::Finite(0.0)
        } else {
            Radius::Unbounded
        };
    }
    if denom > 0.0 {
        return Radius::Unbounded;
    }
    let s1 = cross(gap, u2) / denom;
    let s2 = cross(gap, u1) / denom;
    if s1 < -1e-12 || s2 < -1e-12 {
        return Radius::Unbounded;
    }
    let x = [p1[0] + s1 * u1[0], p1[1] + s1 * u1[1]];
    Radius::Finite(x[0].hypot(x[1]))
}

/// Smallest range beyond which every direction is seen by some camera.
pub fn min_full_coverage_radius(layout: &CameraLayout) -> Radius {
    let cams = layout.cameras();
    if cams.len() < 2 {
        return Radius::Unbounded;
    }
    let mut worst: f64 = 0.0;
    for (i, j) in layout.adjacent_pairs() {
        match intersection_radius(&cams[i], &cams[j]) {
            Radius::Finite(r) => worst = worst.max(r),
            Radius::Unbounded => return Radius::Unbounded,
        }
    }
    Radius::Finite(worst)
}

/// Polar angles (radians) where the ray `p + t·u`, `t >= 0`, crosses the
/// circle of the given radius.
fn ray_circle_angles(p: [f64; 2], u: [f64; 2], radius: f64, out: &mut Vec<f64>) {
    let b = p[0] * u[0] + p[1] * u[1];
    let c = p[0] * p[0] + p[1] * p[1] - radius * radius;
    let disc = b * b - c;
    if disc < 0.0 {
        return;
    }
    let root = disc.sqrt();
    for t in [-b - root, -b + root] {
        if t >= 0.0 {
            let q = [p[0] + t * u[0], p[1] + t * u[1]];
            out.push(q[1].atan2(q[0]).rem_euclid(TAU));
        }
    }
}

/// Arcs of the circle of `radius` metres that no camera sees.
///
/// The circle is split at every crossing of a wedge boundary; each piece is
/// then wholly covered or wholly blind, decided at its midpoint.
pub fn blind_sectors(layout: &CameraLayout, radius: f64) -> Result<Vec<AngularInterval>> {
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(Error::invalid(format!("query radius {radius} must be positive")));
    }
    let mut cuts = Vec::new();
    for cam in layout.cameras() {
        let p = cam.apex();
        let az = cam.azimuth_deg.to_radians();
        let half = cam.half_fov_deg.to_radians();
        for dir in [az - half, az + half] {
            ray_circle_angles(p, [dir.cos(), dir.sin()], radius, &mut cuts);
        }
    }
    let on_circle = |a: f64| [radius * a.cos(), radius * a.sin()];
    cuts.sort_by(f64::total_cmp);
    cuts.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    if cuts.is_empty() {
        return Ok(if layout.covers(on_circle(0.0)) {
            Vec::new()
        } else {
            vec![AngularInterval {
                start_deg: 0.0,
                end_deg: 360.0,
            }]
        });
    }

    // Blind arcs as (start, end) radians with end > start, in cut order.
    let mut arcs: Vec<(f64, f64)> = Vec::new();
    let n = cuts.len();
    for i in 0..n {
        let start = cuts[i];
        let end = if i + 1 < n { cuts[i + 1] } else { cuts[0] + TAU };
        if end - start < 1e-12 {
            continue;
        }
        if layout.covers(on_circle(0.5 * (start + end))) {
            continue;
        }
        match arcs.last_mut() {
            Some(last) if (last.1 - start).abs() < 1e-12 => last.1 = end,
            _ => arcs.push((start, end)),
        }
    }
    // Join the last arc with the first across the cut list's wrap point.
    if arcs.len() > 1 {
        let (first, last) = (arcs[0], arcs[arcs.len() - 1]);
        if (last.1 - (first.0 + TAU)).abs() < 1e-12 {
            arcs.pop();
            arcs[0] = (last.0, first.1 + TAU);
        }
    }
    let mut out: Vec<AngularInterval> = arcs
        .into_iter()
        .map(|(s, e)| {
            let start = s.to_degrees().rem_euclid(360.0);
            AngularInterval {
                start_deg: start,
                end_deg: start + (e - s).to_degrees(),
            }
        })
        .filter(|iv| iv.width_deg() > 1e-9)
        .collect();
    out.sort_by(|a, b| a.start_deg.total_cmp(&b.start_deg));
    Ok(out)
}

pub fn coverage_report(layout: &CameraLayout, query_radius: Option<f64>) -> Result<CoverageReport> {
    let cams = layout.cameras();
    let pairwise_radii = layout
        .adjacent_pairs()
        .map(|(i, j)| PairRadius {
            azimuth_from_deg: cams[i].azimuth_deg,
            azimuth_to_deg: cams[j].azimuth_deg,
            radius_m: intersection_radius(&cams[i], &cams[j]),
        })
        .collect();
    let blind = match query_radius {
        Some(r) => blind_sectors(layout, r)?,
        None => Vec::new(),
    };
    Ok(CoverageReport {
        pairwise_radii,
        min_full_coverage_radius: min_full_coverage_radius(layout),
        query_radius_m: query_radius,
        blind_sectors: blind,
    })
}

/// Dense angular sweep of the circle, independent of the analytic cuts.
/// Returns blind runs as (start, end) in degrees at the given step.
#[cfg(test)]
pub fn sweep_blind_runs(layout: &CameraLayout, radius: f64, step_deg: f64) -> Vec<(f64, f64)> {
    let steps = (360.0 / step_deg).round() as usize;
    let blind: Vec<bool> = (0..steps)
        .map(|i| {
            let a = (i as f64 * step_deg).to_radians();
            !layout.covers([radius * a.cos(), radius * a.sin()])
        })
        .collect();
    let mut runs = Vec::new();
    let mut i = 0;
    while i < steps {
        if blind[i] {
            let start = i;
            while i < steps && blind[i] {
                i += 1;
            }
            runs.push((start as f64 * step_deg, (i - 1) as f64 * step_deg));
        } else {
            i += 1;
        }
    }
    if runs.len() > 1 && blind[0] && blind[steps - 1] {
        let last = runs.pop().unwrap();
        runs[0] = (last.0, runs[0].1 + 360.0);
    }
    runs
}
