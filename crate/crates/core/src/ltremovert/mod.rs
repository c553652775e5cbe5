//! HD removal within each session and LD change detection between two
//! aligned sessions.
//!
//! A point is *free* in a scan when every return in the window around its
//! direction lies farther than the point by more than a margin: the sensor saw
//! through it. HD points are map points free in another keyframe of the same
//! session; strong ND points are free in some query keyframe; weak PD points
//! are free in some central keyframe.

mod hd;
mod ld;
mod range_image;

use std::path::Path;

pub use hd::{map_with_sources, remove_hd, remove_hd_scans, HdResult, Viewpoints};
pub use ld::{
    detect_ld, detect_ld_indices, revert_weak_nd, split_pd, strong_nd_mask, strong_pd_mask,
    LdResult,
};
pub use range_image::{project, project_local, RangeImage, RangeImageParams};

use crate::cloud::PointCloud;
use crate::config::Config;
use crate::error::{Error, Result};
use crate::ltslam::scan_file_name;
use crate::ltslam::SessionBundle;

#[derive(Clone, Debug, PartialEq)]
pub struct RemovertParams {
    pub image: RangeImageParams,
    /// Window growth factors, finest first.
    pub window_factors: Vec<usize>,
    pub eps_hd: f64,
    pub eps_nd: f64,
    pub eps_pd: f64,
    pub ld_k: usize,
    pub ld_r: f64,
    /// Query viewpoints that must see through an ND point to make it strong.
    pub strong_nd_views: usize,
}

impl Default for RemovertParams {
    fn default() -> Self {
        Self {
            image: RangeImageParams::default(),
            window_factors: vec![1, 2, 4],
            eps_hd: 0.2,
            eps_nd: 0.2,
            eps_pd: 0.2,
            ld_k: 2,
            ld_r: 0.3,
            strong_nd_views: 1,
        }
    }
}

impl RemovertParams {
    /// One image row per channel and one column per azimuth step.
    pub fn for_sensor(
        channels: usize,
        fov_up: f64,
        fov_down: f64,
        az_step: f64,
        max_range: f64,
    ) -> Self {
        Self {
            image: RangeImageParams {
                width: (360.0 / az_step).round() as usize,
                height: channels,
                fov_up,
                fov_down,
                max_range,
            },
            ..Self::default()
        }
    }

    pub(crate) fn check(&self) -> Result<()> {
        if self.window_factors.is_empty() || self.window_factors.contains(&0) {
            return Err(Error::Config(
                "window_factors must be a non-empty list of positive integers".into(),
            ));
        }
        if self.ld_k == 0 || self.ld_r <= 0.0 || self.strong_nd_views == 0 {
            return Err(Error::Config(
                "ld_k, ld_r and strong_nd_views must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct RemovertOutput {
    pub central_session: u32,
    pub query_session: u32,
    pub central_hd: HdResult,
    pub query_hd: HdResult,
    pub ld: LdResult,
}

/// Full change detection for two sessions whose node values are world poses.
/// Visibility is always judged against the raw scans, so removed HD points
/// never open false free space.
pub fn detect_changes(
    central: &SessionBundle,
    query: &SessionBundle,
    params: &RemovertParams,
) -> Result<RemovertOutput> {
    params.check()?;
    let central_hd = remove_hd(central, params)?;
    let query_hd = remove_hd(query, params)?;
    let ld = detect_ld_between(
        &central_hd.static_scans,
        central,
        &query_hd.static_scans,
        query,
        params,
    )?;
    Ok(RemovertOutput {
        central_session: central.id,
        query_session: query.id,
        central_hd,
        query_hd,
        ld,
    })
}

/// LD between cleaned keyframe clouds, with visibility from each session's raw scans.
pub fn detect_ld_between(
    central_clean: &[PointCloud],
    central: &SessionBundle,
    query_clean: &[PointCloud],
    query: &SessionBundle,
    params: &RemovertParams,
) -> Result<LdResult> {
    params.check()?;
    let (cmap, csrc) = hd::map_with_sources(central_clean, central.poses());
    let (qmap, qsrc) = hd::map_with_sources(query_clean, query.poses());
    let (nd_idx, pd_idx) =
        detect_ld_indices(cmap.points(), qmap.points(), params.ld_k, params.ld_r);
    let nd_raw = cmap.select(&nd_idx);
    let pd_raw = qmap.select(&pd_idx);
    let query_views = Viewpoints::from_session(query, params)?;
    let central_views = Viewpoints::from_session(central, params)?;
    Ok(LdResult {
        nd_strong_mask: strong_nd_mask(&nd_raw, &query_views, params),
        pd_strong_mask: strong_pd_mask(&pd_raw, &central_views, params),
        nd_source: nd_idx.iter().map(|&i| csrc[i]).collect(),
        pd_source: pd_idx.iter().map(|&i| qsrc[i]).collect(),
        nd_raw,
        pd_raw,
    })
}

/// Writes `nd_strong/`, `nd_weak/` (one file per central keyframe),
/// `pd_strong/`, `pd_weak/` (one file per query keyframe), all world frame,
/// `scans_clean/{central,query}/` in keyframe-local frame, and the two
/// session ids in `sessions.txt`.
pub fn write_outputs(dir: impl AsRef<Path>, out: &RemovertOutput) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let ids = format!(
        "central: {}\nquery: {}\n",
        out.central_session, out.query_session
    );
    std::fs::write(dir.join("sessions.txt"), ids)
        .map_err(|e| Error::io(dir.join("sessions.txt"), e))?;
    let nc = out.central_hd.static_scans.len();
    let nq = out.query_hd.static_scans.len();
    let sets: [(&str, Vec<PointCloud>); 4] = [
        ("nd_strong", out.ld.nd_by_keyframe(nc, |s| s)),
        ("nd_weak", out.ld.nd_by_keyframe(nc, |s| !s)),
        ("pd_strong", out.ld.pd_by_keyframe(nq, |s| s)),
        ("pd_weak", out.ld.pd_by_keyframe(nq, |s| !s)),
    ];
    for (name, clouds) in &sets {
        write_clouds(&dir.join(name), clouds)?;
    }
    write_clouds(
        &dir.join("scans_clean").join("central"),
        &out.central_hd.static_scans,
    )?;
    write_clouds(
        &dir.join("scans_clean").join("query"),
        &out.query_hd.static_scans,
    )
}

pub(crate) fn write_clouds(dir: &Path, clouds: &[PointCloud]) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (i, c) in clouds.iter().enumerate() {
        c.write(dir.join(scan_file_name(i)))?;
    }
    Ok(())
}

/// `(central, query)` session ids recorded by [`write_outputs`].
pub fn read_session_ids(dir: &Path) -> Result<(u32, u32)> {
    let cfg = Config::read(dir.join("sessions.txt"))?;
    cfg.validate(&[], &["central", "query"])?;
    Ok((cfg.require("central")?, cfg.require("query")?))
}

/// Reads `NNNNNN.xyz` files `0..` until the first missing index.
pub fn read_clouds(dir: &Path) -> Result<Vec<PointCloud>> {
    if !dir.is_dir() {
        return Err(Error::io(
            dir,
            std::io::Error::new(std::io::ErrorKind::NotFound, "directory not found"),
        ));
    }
    let mut out = Vec::new();
    loop {
        let p = dir.join(scan_file_name(out.len()));
        if !p.exists() {
            return Ok(out);
        }
        out.push(PointCloud::read(&p)?);
    }
}
