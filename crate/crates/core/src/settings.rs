//! Configuration keys shared by the command-line tools and the pipeline.

use crate::config::Config;
use crate::error::{Error, Result};
use crate::ltmap::MapParams;
use crate::ltremovert::RemovertParams;
use crate::ltslam::SlamParams;

pub const SENSOR_KEYS: &[&str] = &["channels", "fov_up", "fov_down", "az_step", "max_range"];

pub const SLAM_KEYS: &[&str] = &[
    "sc_threshold",
    "sc_candidates",
    "sc_rings",
    "sc_sectors",
    "sc_max_radius",
    "icp_voxel",
    "icp_max_corr_dist",
    "submap_window",
    "fitness_threshold",
    "fitness_scale",
    "robust_scale",
    "radius",
];

pub const REMOVERT_KEYS: &[&str] = &[
    "window_factors",
    "eps_hd",
    "eps_nd",
    "eps_pd",
    "ld_k",
    "ld_r",
    "strong_nd_views",
];

pub const MAP_KEYS: &[&str] = &[
    "resolution",
    "assoc_range",
    "meta_votes",
    "link_radius",
    "min_cluster_points",
];

/// Union of key lists, for `Config::validate`.
pub fn keys(groups: &[&[&'static str]], extra: &[&'static str]) -> Vec<&'static str> {
    groups
        .iter()
        .flat_map(|g| g.iter().copied())
        .chain(extra.iter().copied())
        .collect()
}

pub fn slam_params(cfg: &Config) -> Result<SlamParams> {
    let mut p = SlamParams::default();
    p.sc_threshold = cfg.get_or("sc_threshold", p.sc_threshold)?;
    p.sc_candidates = cfg.get_or("sc_candidates", p.sc_candidates)?;
    p.scan_context.rings = cfg.get_or("sc_rings", p.scan_context.rings)?;
    p.scan_context.sectors = cfg.get_or("sc_sectors", p.scan_context.sectors)?;
    p.scan_context.max_radius = cfg.get_or("sc_max_radius", p.scan_context.max_radius)?;
    p.icp_voxel = cfg.get_or("icp_voxel", p.icp_voxel)?;
    p.icp.max_corr_dist = cfg.get_or("icp_max_corr_dist", p.icp.max_corr_dist)?;
    p.submap_window = cfg.get_or("submap_window", p.submap_window)?;
    p.fitness_threshold = cfg.get_or("fitness_threshold", p.fitness_threshold)?;
    p.fitness_scale = cfg.get_or("fitness_scale", p.fitness_scale)?;
    p.robust_scale = cfg.get_or("robust_scale", p.robust_scale)?;
    p.radius = cfg.get_or("radius", p.radius)?;
    if p.scan_context.rings == 0 || p.scan_context.sectors == 0 || p.sc_candidates == 0 {
        return Err(Error::Config(
            "sc_rings, sc_sectors and sc_candidates must be positive".into(),
        ));
    }
    Ok(p)
}

/// Range image geometry defaults to the simulator's default sensor.
pub fn removert_params(cfg: &Config) -> Result<RemovertParams> {
    let base = RemovertParams::for_sensor(
        cfg.get_or("channels", 32usize)?,
        cfg.get_or("fov_up", 3.0)?,
        cfg.get_or("fov_down", -25.0)?,
        cfg.get_or("az_step", 0.4)?,
        cfg.get_or("max_range", 25.0)?,
    );
    if !(cfg.get_or("az_step", 0.4f64)? > 0.0) {
        return Err(Error::Config("az_step must be positive".into()));
    }
    let p = RemovertParams {
        window_factors: cfg
            .get_list("window_factors")?
            .unwrap_or(base.window_factors.clone()),
        eps_hd: cfg.get_or("eps_hd", base.eps_hd)?,
        eps_nd: cfg.get_or("eps_nd", base.eps_nd)?,
        eps_pd: cfg.get_or("eps_pd", base.eps_pd)?,
        ld_k: cfg.get_or("ld_k", base.ld_k)?,
        ld_r: cfg.get_or("ld_r", base.ld_r)?,
        strong_nd_views: cfg.get_or("strong_nd_views", base.strong_nd_views)?,
        ..base
    };
    p.check()?;
    Ok(p)
}

/// The association range defaults to the sensor range.
pub fn map_params(cfg: &Config) -> Result<MapParams> {
    let d = MapParams::default();
    let p = MapParams {
        resolution: cfg.get_or("resolution", d.resolution)?,
        assoc_range: cfg.get_or("assoc_range", cfg.get_or("max_range", d.assoc_range)?)?,
        meta_votes: cfg.get_or("meta_votes", d.meta_votes)?,
        link_radius: cfg.get_or("link_radius", d.link_radius)?,
        min_cluster_points: cfg.get_or("min_cluster_points", d.min_cluster_points)?,
    };
    p.check()?;
    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_the_simulator_sensor() {
        let cfg = Config::new("mem");
        let r = removert_params(&cfg).unwrap();
        assert_eq!((r.image.width, r.image.height), (900, 32));
        assert_eq!(map_params(&cfg).unwrap(), MapParams::default());
        assert_eq!(slam_params(&cfg).unwrap(), SlamParams::default());
    }

    #[test]
    fn values_override_and_bad_values_are_config_errors() {
        let cfg = Config::parse(
            "channels: 16\naz_step: 1\nwindow_factors: 1, 3\nmax_range: 40\n",
            "t",
        )
        .unwrap();
        let r = removert_params(&cfg).unwrap();
        assert_eq!((r.image.width, r.image.height), (360, 16));
        assert_eq!(r.window_factors, vec![1, 3]);
        assert_eq!(map_params(&cfg).unwrap().assoc_range, 40.0);
        let bad = Config::parse("window_factors: 0\n", "t").unwrap();
        assert!(matches!(removert_params(&bad), Err(Error::Config(_))));
        let bad = Config::parse("ld_k: two\n", "t").unwrap();
        assert!(matches!(removert_params(&bad), Err(Error::Config(_))));
    }
}
