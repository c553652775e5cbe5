//! Patch-wise Chamfer consistency between two maps.

use std::collections::BTreeMap;

use nalgebra::Point3;
use rayon::prelude::*;

use crate::cloud::PointCloud;
use crate::spatial::{KdTree, SpatialIndex};
use crate::voxel::VoxelKey;

#[derive(Clone, Debug, PartialEq)]
pub struct PatchParams {
    /// Edge of the cubic patch, meters; the grid is anchored at the origin.
    pub size: f64,
    /// Both maps need this many points in a patch for it to count.
    pub min_points: usize,
    pub thresholds: Vec<f64>,
}

impl Default for PatchParams {
    fn default() -> Self {
        Self {
            size: 5.0,
            min_points: 25,
            thresholds: vec![1.0, 2.0, 3.0],
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PatchReport {
    pub params: PatchParams,
    /// Chamfer distance of every valid patch, by patch key.
    pub patches: Vec<(VoxelKey, f64)>,
    pub max: f64,
    pub avg: f64,
    pub var: f64,
    /// Count of valid patches with distance above each threshold.
    pub above: Vec<usize>,
}

impl PatchReport {
    pub fn np_valid(&self) -> usize {
        self.patches.len()
    }

    /// One `key value` pair per line.
    pub fn to_text(&self) -> String {
        let mut s = format!(
            "np_valid {}\nmax {:.6}\navg {:.6}\nvar {:.6}\n",
            self.np_valid(),
            self.max,
            self.avg,
            self.var
        );
        for (t, n) in self.params.thresholds.iter().zip(&self.above) {
            s.push_str(&format!("np_cd_gt_{t} {n}\n"));
        }
        s
    }
}

fn mean_nn(from: &[Point3<f64>], to: &KdTree) -> f64 {
    let total: f64 = from
        .iter()
        .map(|p| to.nearest(p).map_or(0.0, |(_, d)| d))
        .sum();
    total / from.len() as f64
}

/// Average of the two directed mean nearest-neighbour distances.
pub fn chamfer_distance(a: &[Point3<f64>], b: &[Point3<f64>]) -> f64 {
    if a.is_empty() || b.is_empty() {
        return f64::NAN;
    }
    let (ta, tb) = (KdTree::new(a), KdTree::new(b));
    0.5 * (mean_nn(a, &tb) + mean_nn(b, &ta))
}

fn bucket(cloud: &PointCloud, size: f64) -> BTreeMap<VoxelKey, Vec<Point3<f64>>> {
    let mut m: BTreeMap<VoxelKey, Vec<Point3<f64>>> = BTreeMap::new();
    for p in cloud.points() {
        m.entry(VoxelKey::of(p, size)).or_default().push(*p);
    }
    m
}

pub fn chamfer_patches(a: &PointCloud, b: &PointCloud, params: &PatchParams) -> PatchReport {
    let (pa, pb) = (bucket(a, params.size), bucket(b, params.size));
    let pairs: Vec<(VoxelKey, &Vec<Point3<f64>>, &Vec<Point3<f64>>)> = pa
        .iter()
        .filter_map(|(k, x)| pb.get(k).map(|y| (*k, x, y)))
        .filter(|(_, x, y)| x.len() >= params.min_points && y.len() >= params.min_points)
        .collect();
    let patches: Vec<(VoxelKey, f64)> = pairs
        .par_iter()
        .map(|(k, x, y)| (*k, chamfer_distance(x, y)))
        .collect();
    let n = patches.len() as f64;
    let (max, avg, var) = if patches.is_empty() {
        (0.0, 0.0, 0.0)
    } else {
        let avg = patches.iter().map(|p| p.1).sum::<f64>() / n;
        let var = patches.iter().map(|p| (p.1 - avg).powi(2)).sum::<f64>() / n;
        (patches.iter().map(|p| p.1).fold(0.0, f64::max), avg, var)
    };
    let above = params
        .thresholds
        .iter()
        .map(|&t| patches.iter().filter(|p| p.1 > t).count())
        .collect();
    PatchReport {
        params: params.clone(),
        patches,
        max,
        avg,
        var,
        above,
    }
}
