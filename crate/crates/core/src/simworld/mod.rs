//! Deterministic multi-session LiDAR simulator over boxes and a ground plane.

mod raycast;
mod simulate;
mod truth;
mod world;

pub use raycast::{cast, ray_box, ray_ground, Hit};
pub use simulate::{
    beam, drifted_nodes, ground_truth_trajectory, odometry_sigma, simulate_scan, simulate_session,
};
pub use truth::{ground_truth_ld, occluded_in, visible_from, world_points_where, TruthLd};
pub use world::{
    Aabb, Agent, BoxObject, Drift, Ground, ObjectClass, SensorSpec, SessionSpec, WorldSpec,
};
