//! Analytic scene description and ray casting.

use nalgebra::{Point3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform colour with an optional checker overlay in surface coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Material {
    pub rgb: [u8; 3],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checker: Option<Checker>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Checker {
    pub rgb: [u8; 3],
    /// Cell size in metres.
    pub cell: f64,
}

impl Material {
    pub const fn plain(rgb: [u8; 3]) -> Self {
        Self { rgb, checker: None }
    }

    pub const fn checkered(rgb: [u8; 3], alt: [u8; 3], cell: f64) -> Self {
        Self {
            rgb,
            checker: Some(Checker { rgb: alt, cell }),
        }
    }

    /// Colour at surface coordinates `(a, b)` and the distance to the nearest
    /// checker boundary.
    fn shade(&self, a: f64, b: f64) -> ([u8; 3], f64) {
        match self.checker {
            None => (self.rgb, f64::INFINITY),
            Some(Checker { rgb, cell }) => {
                let (ia, ib) = ((a / cell).floor() as i64, (b / cell).floor() as i64);
                let fa = a / cell - ia as f64;
                let fb = b / cell - ib as f64;
                let edge = cell * fa.min(1.0 - fa).min(fb).min(1.0 - fb);
                let colour = if (ia + ib).rem_euclid(2) == 0 { self.rgb } else { rgb };
                (colour, edge)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Shape {
    /// Box standing on its base, rotated about the vertical axis.
    Box {
        /// Centre of the base.
        base: [f64; 3],
        size: [f64; 3],
        yaw_deg: f64,
    },
    /// Upright cylinder.
    Cylinder { base: [f64; 3], radius: f64, height: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SceneObject {
    pub shape: Shape,
    pub material: Material,
}

/// Interior of an axis-aligned room centred on the origin, floor at z = 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoomSpec {
    pub width: f64,
    pub depth: f64,
    pub height: f64,
}

impl Default for RoomSpec {
    fn default() -> Self {
        Self {
            width: 8.0,
            depth: 7.0,
            height: 2.8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub seed: u64,
    /// Enclosing room; without one, rays that miss every object escape.
    #[serde(default)]
    pub room: Option<RoomSpec>,
    pub objects: Vec<SceneObject>,
    /// Global luma multiplier for camera rendering, in (0, 1].
    pub lighting: f64,
}

/// Distinct saturated colours for generated objects.
const PALETTE: [[u8; 3]; 8] = [
    [200, 40, 40],
    [40, 160, 60],
    [40, 70, 200],
    [220, 180, 30],
    [160, 60, 180],
    [30, 170, 180],
    [230, 120, 40],
    [120, 120, 120],
];

impl SceneSpec {
    /// Nothing at all: every ray escapes.
    pub fn empty(seed: u64) -> Self {
        Self {
            seed,
            room: None,
            objects: Vec::new(),
            lighting: 1.0,
        }
    }

    /// The default room with no objects.
    pub fn shell(seed: u64) -> Self {
        Self {
            seed,
            room: Some(RoomSpec::default()),
            objects: Vec::new(),
            lighting: 1.0,
        }
    }

    /// A room with `count` randomly sized and placed objects, kept clear of
    /// the walls and of the sensor position at the centre.
    pub fn seeded(seed: u64, count: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let room = RoomSpec::default();
        let mut objects = Vec::with_capacity(count);
        let margin = 0.6;
        while objects.len() < count {
            let colour = PALETTE[objects.len() % PALETTE.len()];
            let (hx, hy) = (room.width / 2.0 - margin, room.depth / 2.0 - margin);
            let x = rng.gen_range(-hx..hx);
            let y = rng.gen_range(-hy..hy);
            if x.hypot(y) < 1.5 {
                continue;
            }
            let shape = if rng.gen_bool(0.6) {
                Shape::Box {
                    base: [x, y, 0.0],
                    size: [
                        rng.gen_range(0.3..0.8),
                        rng.gen_range(0.3..0.8),
                        rng.gen_range(0.4..1.6),
                    ],
                    yaw_deg: rng.gen_range(0.0..90.0),
                }
            } else {
                Shape::Cylinder {
                    base: [x, y, 0.0],
                    radius: rng.gen_range(0.15..0.35),
                    height: rng.gen_range(0.5..1.8),
                }
            };
            let candidate = SceneObject {
                shape,
                material: Material::plain(colour),
            };
            let clear = objects
                .iter()
                .all(|o: &SceneObject| footprint_gap(&o.shape, &candidate.shape) > 0.5);
            if clear && shape_within(&candidate.shape, &room, margin) {
                objects.push(candidate);
            }
        }
        Self {
            seed,
            room: Some(room),
            objects,
            lighting: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(RoomSpec { width, depth, height }) = self.room {
            if !(width > 0.0 && depth > 0.0 && height > 0.0) {
                return Err(Error::invalid("room dimensions must be positive"));
            }
        }
        if !(self.lighting > 0.0 && self.lighting <= 1.0) {
            return Err(Error::invalid(format!("lighting {} outside (0, 1]", self.lighting)));
        }
        for (i, o) in self.objects.iter().enumerate() {
            let ok = match o.shape {
                Shape::Box { size, .. } => size.iter().all(|s| *s > 0.0),
                Shape::Cylinder { radius, height, .. } => radius > 0.0 && height > 0.0,
            };
            if !ok {
                return Err(Error::invalid(format!("object {i} has non-positive size")));
            }
            if self.room.is_some_and(|room| !shape_within(&o.shape, &room, 0.0)) {
                return Err(Error::invalid(format!("object {i} lies outside the room")));
            }
            if o.material.checker.is_some_and(|c| c.cell.is_nan() || c.cell <= 0.0) {
                return Err(Error::invalid(format!("object {i} checker cell must be positive")));
            }
        }
        Ok(())
    }
}

fn footprint_radius(shape: &Shape) -> ([f64; 2], f64) {
    match *shape {
        Shape::Box { base, size, .. } => ([base[0], base[1]], 0.5 * size[0].hypot(size[1])),
        Shape::Cylinder { base, radius, .. } => ([base[0], base[1]], radius),
    }
}

fn footprint_gap(a: &Shape, b: &Shape) -> f64 {
    let (ca, ra) = footprint_radius(a);
    let (cb, rb) = footprint_radius(b);
    (ca[0] - cb[0]).hypot(ca[1] - cb[1]) - ra - rb
}

/// Whether every corner of the shape's bounds stays `margin` inside the room.
fn shape_within(shape: &Shape, room: &RoomSpec, margin: f64) -> bool {
    let (hx, hy) = (room.width / 2.0 - margin, room.depth / 2.0 - margin);
    let (corners, z0, z1): (Vec<[f64; 2]>, f64, f64) = match *shape {
        Shape::Box { base, size, yaw_deg } => {
            let (s, c) = yaw_deg.to_radians().sin_cos();
            let corners = [(-1.0, -1.0), (1.0, -1.0), (1.0, 1.0), (-1.0, 1.0)]
                .iter()
                .map(|(i, j)| {
                    let (lx, ly) = (i * size[0] / 2.0, j * size[1] / 2.0);
                    [base[0] + c * lx - s * ly, base[1] + s * lx + c * ly]
                })
                .collect();
            (corners, base[2], base[2] + size[2])
        }
        Shape::Cylinder { base, radius, height } => (
            vec![
                [base[0] - radius, base[1] - radius],
                [base[0] + radius, base[1] + radius],
            ],
            base[2],
            base[2] + height,
        ),
    };
    corners.iter().all(|p| p[0].abs() <= hx && p[1].abs() <= hy) && z0 >= 0.0 && z1 <= room.height
}

/// First intersection along a ray.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hit {
    pub distance: f64,
    pub point: Point3<f64>,
    pub normal: Vector3<f64>,
    pub rgb: [u8; 3],
    /// Distance on the surface to the nearest colour or face boundary.
    pub edge_distance: f64,
    /// 0..6 for the room shell, 6 + i for object i.
    pub surface: usize,
}

/// Shell surfaces in the order floor, ceiling, −x, +x, −y, +y.
pub const SHELL_SURFACES: usize = 6;

#[derive(Debug, Clone, PartialEq)]
struct BoxFrame {
    centre: Vector3<f64>,
    half: Vector3<f64>,
    /// Yaw of the local axes.
    cos: f64,
    sin: f64,
}

#[derive(Debug, Clone, PartialEq)]
enum Primitive {
    Box(BoxFrame),
    Cylinder {
        axis: [f64; 2],
        radius: f64,
        z0: f64,
        z1: f64,
    },
}

/// A validated scene ready for ray casting.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub spec: SceneSpec,
    shell: [Material; SHELL_SURFACES],
    primitives: Vec<(Primitive, Material)>,
}

const EPS: f64 = 1e-9;

pub fn generate_scene(spec: &SceneSpec) -> Result<Scene> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0x5ce1e);
    let mut pastel = || -> [u8; 3] {
        [
            rng.gen_range(150..240),
            rng.gen_range(150..240),
            rng.gen_range(150..240),
        ]
    };
    let dark = [60, 55, 50];
    let shell = [
        Material::checkered([110, 100, 90], [70, 65, 60], 0.5),
        Material::plain([235, 235, 230]),
        Material::checkered(pastel(), dark, 0.4),
        Material::checkered(pastel(), dark, 0.4),
        Material::checkered(pastel(), dark, 0.4),
        Material::checkered(pastel(), dark, 0.4),
    ];
    let primitives = spec
        .objects
        .iter()
        .map(|o| {
            let p = match o.shape {
                Shape::Box { base, size, yaw_deg } => {
                    let (sin, cos) = yaw_deg.to_radians().sin_cos();
                    Primitive::Box(BoxFrame {
                        centre: Vector3::new(base[0], base[1], base[2] + size[2] / 2.0),
                        half: Vector3::new(size[0], size[1], size[2]) / 2.0,
                        cos,
                        sin,
                    })
                }
                Shape::Cylinder { base, radius, height } => Primitive::Cylinder {
                    axis: [base[0], base[1]],
                    radius,
                    z0: base[2],
                    z1: base[2] + height,
                },
            };
            (p, o.material)
        })
        .collect();
    Ok(Scene {
        spec: spec.clone(),
        shell,
        primitives,
    })
}

impl Scene {
    pub fn shell_material(&self, surface: usize) -> Material {
        self.shell[surface]
    }

    /// Nearest surface hit by the ray `origin + t·dir`, t > 0; `dir` need not
    /// be normalised but distances are reported in units of |dir|.
    pub fn cast(&self, origin: &Point3<f64>, dir: &Vector3<f64>) -> Option<Hit> {
        let mut best = self.cast_shell(origin, dir);
        for (i, (prim, mat)) in self.primitives.iter().enumerate() {
            let limit = best.as_ref().map_or(f64::INFINITY, |h| h.distance);
            let hit = match prim {
                Primitive::Box(b) => cast_box(b, mat, origin, dir, limit),
                Primitive::Cylinder { axis, radius, z0, z1 } => {
                    cast_cylinder(*axis, *radius, *z0, *z1, mat, origin, dir, limit)
                }
            };
            if let Some(mut h) = hit {
                h.surface = SHELL_SURFACES + i;
                best = Some(h);
            }
        }
        best
    }

    fn cast_shell(&self, origin: &Point3<f64>, dir: &Vector3<f64>) -> Option<Hit> {
        let r = self.spec.room.as_ref()?;
        let (hx, hy) = (r.width / 2.0, r.depth / 2.0);
        let inside = origin.x.abs() < hx && origin.y.abs() < hy && origin.z > 0.0 && origin.z < r.height;
        if !inside {
            return None;
        }
        let mut best: Option<(f64, usize)> = None;
        let mut consider = |t: f64, s: usize| {
            if t > EPS && best.is_none_or(|(bt, _)| t < bt) {
                best = Some((t, s));
            }
        };
        if dir.z < 0.0 {
            consider(-origin.z / dir.z, 0);
        } else if dir.z > 0.0 {
            consider((r.height - origin.z) / dir.z, 1);
        }
        if dir.x < 0.0 {
            consider((-hx - origin.x) / dir.x, 2);
        } else if dir.x > 0.0 {
            consider((hx - origin.x) / dir.x, 3);
        }
        if dir.y < 0.0 {
            consider((-hy - origin.y) / dir.y, 4);
        } else if dir.y > 0.0 {
            consider((hy - origin.y) / dir.y, 5);
        }
        let (t, s) = best?;
        let p = origin + dir * t;
        // Surface coordinates measured from a face corner, and the face size.
        let (a, b, la, lb, normal) = match s {
            0 => (p.x + hx, p.y + hy, 2.0 * hx, 2.0 * hy, Vector3::z()),
            1 => (p.x + hx, p.y + hy, 2.0 * hx, 2.0 * hy, -Vector3::z()),
            2 => (p.y + hy, p.z, 2.0 * hy, r.height, Vector3::x()),
            3 => (p.y + hy, p.z, 2.0 * hy, r.height, -Vector3::x()),
            4 => (p.x + hx, p.z, 2.0 * hx, r.height, Vector3::y()),
            _ => (p.x + hx, p.z, 2.0 * hx, r.height, -Vector3::y()),
        };
        let (rgb, edge) = self.shell[s].shade(a, b);
        Some(Hit {
            distance: t,
            point: p,
            normal,
            rgb,
            edge_distance: edge.min(face_edge(a, b, la, lb)),
            surface: s,
        })
    }
}

fn face_edge(a: f64, b: f64, la: f64, lb: f64) -> f64 {
    a.min(la - a).min(b).min(lb - b).max(0.0)
}

fn cast_box(b: &BoxFrame, mat: &Material, origin: &Point3<f64>, dir: &Vector3<f64>, limit: f64) -> Option<Hit> {
    // Into the box frame.
    let rel = origin.coords - b.centre;
    let o = Vector3::new(b.cos * rel.x + b.sin * rel.y, -b.sin * rel.x + b.cos * rel.y, rel.z);
    let d = Vector3::new(b.cos * dir.x + b.sin * dir.y, -b.sin * dir.x + b.cos * dir.y, dir.z);
    let (mut t0, mut t1) = (f64::NEG_INFINITY, f64::INFINITY);
    let mut axis = 0usize;
    for k in 0..3 {
        if d[k].abs() < 1e-15 {
            if o[k].abs() > b.half[k] {
                return None;
            }
            continue;
        }
        let ta = (-b.half[k] - o[k]) / d[k];
        let tb = (b.half[k] - o[k]) / d[k];
        let (near, far) = if ta < tb { (ta, tb) } else { (tb, ta) };
        if near > t0 {
            t0 = near;
            axis = k;
        }
        t1 = t1.min(far);
    }
    if t0 > t1 || t0 <= EPS || t0 >= limit {
        return None;
    }
    let local = o + d * t0;
    let mut n_local = Vector3::zeros();
    n_local[axis] = local[axis].signum();
    let (u, v) = match axis {
        0 => (1, 2),
        1 => (0, 2),
        _ => (0, 1),
    };
    let (a, bb) = (local[u] + b.half[u], local[v] + b.half[v]);
    let (la, lb) = (2.0 * b.half[u], 2.0 * b.half[v]);
    let (rgb, edge) = mat.shade(a, bb);
    let normal = Vector3::new(
        b.cos * n_local.x - b.sin * n_local.y,
        b.sin * n_local.x + b.cos * n_local.y,
        n_local.z,
    );
    Some(Hit {
        distance: t0,
        point: origin + dir * t0,
        normal,
        rgb,
        edge_distance: edge.min(face_edge(a, bb, la, lb)),
        surface: 0,
    })
}

#[allow(clippy::too_many_arguments)]
fn cast_cylinder(
    axis: [f64; 2],
    radius: f64,
    z0: f64,
    z1: f64,
    mat: &Material,
    origin: &Point3<f64>,
    dir: &Vector3<f64>,
    limit: f64,
) -> Option<Hit> {
    let (ox, oy) = (origin.x - axis[0], origin.y - axis[1]);
    let mut best: Option<(f64, bool)> = None;
    let qa = dir.x * dir.x + dir.y * dir.y;
    if qa > 1e-15 {
        let qb = 2.0 * (ox * dir.x + oy * dir.y);
        let qc = ox * ox + oy * oy - radius * radius;
        let disc = qb * qb - 4.0 * qa * qc;
        if disc >= 0.0 {
            let t = (-qb - disc.sqrt()) / (2.0 * qa);
            let z = origin.z + dir.z * t;
            if t > EPS && z >= z0 && z <= z1 {
                best = Some((t, true));
            }
        }
    }
    if dir.z.abs() > 1e-15 {
        for cap in [z0, z1] {
            let t = (cap - origin.z) / dir.z;
            let (x, y) = (ox + dir.x * t, oy + dir.y * t);
            if t > EPS && x * x + y * y <= radius * radius && best.is_none_or(|(bt, _)| t < bt) {
                best = Some((t, false));
            }
        }
    }
    let (t, side) = best?;
    if t >= limit {
        return None;
    }
    let p = origin + dir * t;
    let (x, y) = (p.x - axis[0], p.y - axis[1]);
    let (normal, a, b, edge) = if side {
        let angle = y.atan2(x) + std::f64::consts::PI;
        let arc = angle * radius;
        let edge = (p.z - z0).min(z1 - p.z).max(0.0);
        (Vector3::new(x, y, 0.0) / radius, arc, p.z - z0, edge)
    } else {
        let up = if (p.z - z1).abs() < (p.z - z0).abs() { 1.0 } else { -1.0 };
        let edge = (radius - x.hypot(y)).max(0.0);
        (Vector3::z() * up, x + radius, y + radius, edge)
    };
    let (rgb, check_edge) = mat.shade(a, b);
    Some(Hit {
        distance: t,
        point: p,
        normal,
        rgb,
        edge_distance: edge.min(check_edge),
        surface: 0,
    })
}
