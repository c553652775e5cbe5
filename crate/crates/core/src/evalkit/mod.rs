//! Evaluation: map consistency, detection accuracy, trajectory error and
//! delta-map efficiency.

mod ate;
mod chamfer;
mod detection;
mod efficiency;

pub use ate::{ate, Ate};
pub use chamfer::{chamfer_distance, chamfer_patches, PatchParams, PatchReport};
pub use detection::{detection_scores, scores, DetectionScores, Scores};
pub use efficiency::{efficiency_report, linear_r2, timed, EfficiencyReport};
