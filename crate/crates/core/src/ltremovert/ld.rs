//! Low-dynamic change between two aligned, HD-cleaned maps.

use nalgebra::Point3;
use rayon::prelude::*;

use super::hd::Viewpoints;
use super::RemovertParams;
use crate::cloud::PointCloud;
use crate::spatial::{KdTree, SpatialIndex};

/// Indices of `central` points with fewer than `k` `query` points within `r`
/// (negative difference) and of `query` points with fewer than `k` `central`
/// points within `r` (positive difference).
pub fn detect_ld_indices(
    central: &[Point3<f64>],
    query: &[Point3<f64>],
    k: usize,
    r: f64,
) -> (Vec<usize>, Vec<usize>) {
    let qt = KdTree::new(query);
    let ct = KdTree::new(central);
    let unmatched = |pts: &[Point3<f64>], tree: &KdTree| -> Vec<usize> {
        pts.par_iter()
            .enumerate()
            .filter(|(_, p)| !tree.has_at_least(p, r, k))
            .map(|(i, _)| i)
            .collect()
    };
    (unmatched(central, &qt), unmatched(query, &ct))
}

/// `(nd_raw, pd_raw)` as clouds.
pub fn detect_ld(
    central: &PointCloud,
    query: &PointCloud,
    k: usize,
    r: f64,
) -> (PointCloud, PointCloud) {
    let (nd, pd) = detect_ld_indices(central.points(), query.points(), k, r);
    (central.select(&nd), query.select(&pd))
}

/// Strong flag per raw ND point: some query viewpoint saw through it at every window factor.
pub fn strong_nd_mask(
    nd_raw: &PointCloud,
    query_views: &Viewpoints,
    params: &RemovertParams,
) -> Vec<bool> {
    nd_raw
        .points()
        .par_iter()
        .map(|p| {
            query_views.free_at_all_factors(
                p,
                &params.window_factors,
                params.eps_nd,
                None,
                params.strong_nd_views,
            )
        })
        .collect()
}

/// `(nd_strong, nd_weak)`: raw ND points never seen as free space by the query
/// session were only occluded and revert to static.
pub fn revert_weak_nd(
    nd_raw: &PointCloud,
    query_views: &Viewpoints,
    params: &RemovertParams,
) -> (PointCloud, PointCloud) {
    split(nd_raw, &strong_nd_mask(nd_raw, query_views, params))
}

/// Strong flag per raw PD point: no central viewpoint saw free space where it now lies.
pub fn strong_pd_mask(
    pd_raw: &PointCloud,
    central_views: &Viewpoints,
    params: &RemovertParams,
) -> Vec<bool> {
    pd_raw
        .points()
        .par_iter()
        .map(|p| {
            !central_views.free_at_all_factors(p, &params.window_factors, params.eps_pd, None, 1)
        })
        .collect()
}

/// `(pd_strong, pd_weak)`: PD points at or behind previously seen surfaces are
/// strong; those occupying formerly observed free space are weak.
pub fn split_pd(
    pd_raw: &PointCloud,
    central_views: &Viewpoints,
    params: &RemovertParams,
) -> (PointCloud, PointCloud) {
    split(pd_raw, &strong_pd_mask(pd_raw, central_views, params))
}

fn split(cloud: &PointCloud, strong: &[bool]) -> (PointCloud, PointCloud) {
    (
        cloud.filter(|i, _| strong[i]),
        cloud.filter(|i, _| !strong[i]),
    )
}

/// Raw and split LD sets in the world frame, each point tagged with the
/// keyframe it came from (central keyframes for ND, query keyframes for PD).
#[derive(Clone, Debug, Default)]
pub struct LdResult {
    pub nd_raw: PointCloud,
    pub nd_source: Vec<usize>,
    pub nd_strong_mask: Vec<bool>,
    pub pd_raw: PointCloud,
    pub pd_source: Vec<usize>,
    pub pd_strong_mask: Vec<bool>,
}

impl LdResult {
    pub fn nd_strong(&self) -> PointCloud {
        split(&self.nd_raw, &self.nd_strong_mask).0
    }

    pub fn nd_weak(&self) -> PointCloud {
        split(&self.nd_raw, &self.nd_strong_mask).1
    }

    pub fn pd_strong(&self) -> PointCloud {
        split(&self.pd_raw, &self.pd_strong_mask).0
    }

    pub fn pd_weak(&self) -> PointCloud {
        split(&self.pd_raw, &self.pd_strong_mask).1
    }

    pub fn is_empty(&self) -> bool {
        self.nd_raw.is_empty() && self.pd_raw.is_empty()
    }

    /// ND points grouped by central keyframe, selected by `keep(strong)`.
    pub fn nd_by_keyframe(&self, n: usize, keep: impl Fn(bool) -> bool) -> Vec<PointCloud> {
        group(&self.nd_raw, &self.nd_source, &self.nd_strong_mask, n, keep)
    }

    /// PD points grouped by query keyframe, selected by `keep(strong)`.
    pub fn pd_by_keyframe(&self, n: usize, keep: impl Fn(bool) -> bool) -> Vec<PointCloud> {
        group(&self.pd_raw, &self.pd_source, &self.pd_strong_mask, n, keep)
    }
}

fn group(
    cloud: &PointCloud,
    source: &[usize],
    strong: &[bool],
    n: usize,
    keep: impl Fn(bool) -> bool,
) -> Vec<PointCloud> {
    let mut idx: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (i, (&s, &st)) in source.iter().zip(strong).enumerate() {
        if s < n && keep(st) {
            idx[s].push(i);
        }
    }
    idx.iter().map(|ix| cloud.select(ix)).collect()
}
