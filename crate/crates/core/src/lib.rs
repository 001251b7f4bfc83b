//! Colourisation of 360° LiDAR point clouds from a ring of cameras.
//!
//! The crate covers the whole chain: layout coverage analysis, colour and
//! targetless extrinsic calibration, frame synchronisation and sharpness
//! gating, low-light enhancement, and the fusion engine itself with its two
//! interchangeable execution strategies. A ray-cast simulator provides
//! ground truth for end-to-end verification.

pub mod calib;
pub mod colorcal;
pub mod coverage;
pub mod enhance;
pub mod error;
pub mod framesync;
pub mod fuse;
pub mod geometry;
pub mod io;
pub mod pipeline;
pub mod register;
pub mod sfm;
pub mod sim;

pub use error::{Error, ErrorClass, Result};
