//! Lifelong LiDAR mapping toolkit: multi-session alignment, change detection
//! between aligned sessions, and delta-map versioning of the central map.

pub mod cloud;
pub mod config;
pub mod error;
pub mod evalkit;
pub mod geometry;
pub mod ltmap;
pub mod ltremovert;
pub mod ltslam;
pub mod pipeline;
pub mod settings;
pub mod simworld;
pub mod spatial;
pub mod voxel;

pub use cloud::PointCloud;
pub use error::{Error, Result};
pub use geometry::{compose, relative, Pose};
pub use spatial::{KdTree, SpatialIndex};
pub use voxel::{cloud_minus, voxelize, VoxelKey, VoxelSet};
