//! Rigid transforms, the pinhole/Brown–Conrady camera model and the raster
//! and point-cloud containers shared by every other module.

mod align;
mod camera;
mod cloud;
mod image;
mod transform;
mod undistort;

pub use align::{kabsch, umeyama, Similarity};
pub use camera::{reprojection_error, CameraIntrinsics, DistortionCoefficients};
pub use cloud::{centroid, transform_points, PointCloud};
pub use image::{luma_of, Image, LUMA_WEIGHTS};
pub use transform::{orthonormalize, rotation_angle, skew, RigidTransform, ORTHONORMAL_TOL};
pub use undistort::{undistort_image, undistorted_pixel, Tap, UndistortMap};
