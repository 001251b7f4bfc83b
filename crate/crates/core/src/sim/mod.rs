//! Ray-cast simulator providing ground truth for every pipeline stage.

mod capture;
mod chart;
mod dataset;
mod scene;
mod sensors;
mod workload;

pub use capture::{checkerboard_reprojection_px, project_with, simulate_capture, CalibrationCapture, CaptureParams};
pub use chart::{render_chart, ChannelResponse};
pub use dataset::{
    simulate_sequence, write_dataset, DatasetSummary, Sequence, SequenceSpec, CALIBRATION_FILE, SCENE_FILE,
};
pub use scene::{
    generate_scene, Checker, Hit, Material, RoomSpec, Scene, SceneObject, SceneSpec, Shape, SHELL_SURFACES,
};
pub use sensors::{
    expose, render_radiance, simulate_camera, simulate_lidar, LidarScan, LidarSpec, SensorModel, SensorRig,
    SurfaceTruth, BACKGROUND,
};
pub use workload::fusion_workload;
