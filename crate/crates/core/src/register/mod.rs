//! Targetless LiDAR–camera extrinsic calibration: preprocessing, object
//! clustering, cross-modal cluster matching, metric scale recovery,
//! registration and conversion to per-camera extrinsics.

mod clusters;
mod dbscan;
mod extrinsic;
mod features;
mod filter;
mod icp;
mod preprocess;
mod spatial;

pub use clusters::{
    match_clusters, match_level_clusters, scale_factor, ClusterDescriptor, ClusterMatching, ClusterSet, ScaleFactor,
    MAX_GRAPH_RESIDUAL,
};
pub use dbscan::{dbscan, Clustering};
pub use extrinsic::{
    calibrate_extrinsics, camera_extrinsic, correspondence_score, ClusterScore, ExtrinsicCalibration, ExtrinsicParams,
};
pub use features::{fpfh, voxel_downsample, Feature, FEATURE_LEN};
pub use filter::statistical_outlier_filter;
pub use icp::{
    coarse_align, joint_refine, joint_residual, refine_pair, register_pair, JointRefinement, RegistrationParams,
    RegistrationResult, SurfaceTarget,
};
pub use preprocess::{preprocess_cloud, preprocess_indices, PreprocessParams};
pub use spatial::{estimate_surfaces, fit_surface, LocalSurface, PointIndex};
