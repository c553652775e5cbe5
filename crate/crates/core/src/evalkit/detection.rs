//! Point-wise precision and recall of LD detection against simulator truth.

use nalgebra::Point3;
use rayon::prelude::*;

use crate::cloud::PointCloud;
use crate::ltremovert::LdResult;
use crate::simworld::TruthLd;
use crate::spatial::{KdTree, SpatialIndex};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Scores {
    pub predicted: usize,
    pub truth: usize,
    /// Predicted points with a truth point within the match radius.
    pub matched_predicted: usize,
    /// Truth points with a predicted point within the match radius.
    pub matched_truth: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

fn matched(from: &[Point3<f64>], to: &[Point3<f64>], r: f64) -> usize {
    if to.is_empty() {
        return 0;
    }
    let tree = KdTree::new(to);
    from.par_iter()
        .filter(|p| tree.has_at_least(p, r, 1))
        .count()
}

pub fn scores(predicted: &PointCloud, truth: &PointCloud, match_radius: f64) -> Scores {
    let mp = matched(predicted.points(), truth.points(), match_radius);
    let mt = matched(truth.points(), predicted.points(), match_radius);
    let ratio = |m: usize, n: usize, empty_other: bool| -> f64 {
        if n == 0 {
            if empty_other {
                1.0
            } else {
                0.0
            }
        } else {
            m as f64 / n as f64
        }
    };
    let precision = ratio(mp, predicted.len(), truth.is_empty());
    let recall = ratio(mt, truth.len(), predicted.is_empty());
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    Scores {
        predicted: predicted.len(),
        truth: truth.len(),
        matched_predicted: mp,
        matched_truth: mt,
        precision,
        recall,
        f1,
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DetectionScores {
    pub nd: Scores,
    pub pd: Scores,
}

impl DetectionScores {
    pub fn to_text(&self) -> String {
        let line = |name: &str, s: &Scores| {
            format!(
                "{name} predicted {} truth {} precision {:.6} recall {:.6} f1 {:.6}\n",
                s.predicted, s.truth, s.precision, s.recall, s.f1
            )
        };
        line("nd", &self.nd) + &line("pd", &self.pd)
    }
}

/// ND is scored on strong ND (weak ND reverts to static); PD on every raw PD point.
pub fn detection_scores(
    predicted: &LdResult,
    truth: &TruthLd,
    match_radius: f64,
) -> DetectionScores {
    DetectionScores {
        nd: scores(&predicted.nd_strong(), &truth.nd, match_radius),
        pd: scores(&predicted.pd_raw, &truth.pd, match_radius),
    }
}
