//! Multi-session pose-graph alignment.

pub mod align;
pub mod descriptor;
pub mod factors;
pub mod graph;
pub mod icp;
pub mod session;
pub mod solver;

pub use align::{
    adaptive_covariance, align_sessions, optimize_multisession, radius_refine_loops, to_world,
    Alignment, LoopConstraint, SlamParams,
};
pub use descriptor::{
    descriptor_distance, detect_inter_session_loops, make_descriptor, Descriptor, ScanContextParams,
};
pub use graph::{Edge, PoseGraph};
pub use icp::{icp_register, IcpParams, IcpResult};
pub use session::{label_file_name, scan_file_name, Keyframe, SessionBundle};
