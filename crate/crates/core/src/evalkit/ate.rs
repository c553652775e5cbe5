//! Absolute trajectory error after first-pose alignment.

use crate::error::{Error, Result};
use crate::geometry::{wrap_angle, Pose};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Ate {
    pub rmse_translation: f64,
    pub rmse_yaw_deg: f64,
}

/// RMS translation and yaw error of `estimated` against `truth`, node by node,
/// after moving `estimated` so its first pose coincides with the truth's.
pub fn ate(estimated: &[Pose], truth: &[Pose]) -> Result<Ate> {
    if estimated.len() != truth.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} estimated poses for {} ground-truth poses",
            estimated.len(),
            truth.len()
        )));
    }
    if truth.is_empty() {
        return Err(Error::EmptyInput(
            "trajectory error of an empty trajectory".into(),
        ));
    }
    let align = truth[0].compose(&estimated[0].inverse());
    let (mut st, mut sy) = (0.0, 0.0);
    for (e, t) in estimated.iter().zip(truth) {
        let a = align.compose(e);
        st += (a.translation() - t.translation()).norm_squared();
        sy += wrap_angle(a.yaw() - t.yaw()).powi(2);
    }
    let n = truth.len() as f64;
    Ok(Ate {
        rmse_translation: (st / n).sqrt(),
        rmse_yaw_deg: (sy / n).sqrt().to_degrees(),
    })
}
