//! Two-view and multi-view geometry on supplied 2D–2D correspondences.
//!
//! Poses map world points into the camera frame: `x_cam = R·x_world + t`.

mod bundle;
mod essential;
mod fundamental;
mod reconstruct;
mod triangulate;

pub use bundle::{bundle_adjust, observation_terms, BundleParams, BundleResult, PoseJacobian};
pub use essential::{decompose_essential, essential_from_fundamental, EssentialMatrix};
pub use fundamental::{estimate_fundamental, sampson_distance, FundamentalEstimate, FundamentalMatrix, RansacParams};
pub use reconstruct::{reconstruct, PairMatch, Reconstruction};
pub use triangulate::{triangulate, triangulate_views};

use nalgebra::Point2;
use serde::{Deserialize, Serialize};

use crate::geometry::RigidTransform;

/// A matched pixel pair: `a` in view A, `b` in view B.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Correspondence {
    pub a: Point2<f64>,
    pub b: Point2<f64>,
    #[serde(default = "unit_weight")]
    pub weight: f64,
}

fn unit_weight() -> f64 {
    1.0
}

impl Correspondence {
    pub fn new(a: Point2<f64>, b: Point2<f64>) -> Self {
        Self { a, b, weight: 1.0 }
    }
}

/// World-to-camera pose of one view.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraPose {
    pub view: usize,
    pub world_to_camera: RigidTransform,
}

impl CameraPose {
    pub fn new(view: usize, world_to_camera: RigidTransform) -> Self {
        Self { view, world_to_camera }
    }

    /// Camera centre in world coordinates.
    pub fn centre(&self) -> nalgebra::Point3<f64> {
        let t = &self.world_to_camera;
        nalgebra::Point3::from(-(t.rotation().transpose() * t.translation()))
    }
}

/// Pixel observation of point `point` in view `view`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub point: usize,
    pub view: usize,
    pub pixel: Point2<f64>,
}
