//! High-dynamic point removal by scan-to-map visibility.

use nalgebra::Point3;
use rayon::prelude::*;

use super::range_image::{project_local, RangeImage};
use super::RemovertParams;
use crate::cloud::PointCloud;
use crate::error::{Error, Result};
use crate::geometry::Pose;
use crate::ltslam::SessionBundle;

/// Keyframe range images with the poses they were taken from.
pub struct Viewpoints {
    images: Vec<RangeImage>,
    inverse: Vec<Pose>,
    max_range: f64,
}

impl Viewpoints {
    pub fn new(
        scans: &[&PointCloud],
        poses: &[Pose],
        params: &RemovertParams,
    ) -> Result<Viewpoints> {
        if scans.len() != poses.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} scans for {} poses",
                scans.len(),
                poses.len()
            )));
        }
        let images = scans
            .par_iter()
            .map(|s| project_local(s.points(), &params.image))
            .collect::<Result<Vec<_>>>()?;
        Ok(Viewpoints {
            images,
            inverse: poses.iter().map(Pose::inverse).collect(),
            max_range: params.image.max_range,
        })
    }

    /// Raw keyframe scans at the session's current node values.
    pub fn from_session(session: &SessionBundle, params: &RemovertParams) -> Result<Viewpoints> {
        Viewpoints::new(&session.clouds(), session.poses(), params)
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    /// Number of viewpoints, other than `skip`, that observe the world point `p` in free space.
    pub fn free_count(
        &self,
        p: &Point3<f64>,
        factor: usize,
        eps: f64,
        skip: Option<usize>,
        stop_at: usize,
    ) -> usize {
        let mut n = 0;
        for (j, (img, inv)) in self.images.iter().zip(&self.inverse).enumerate() {
            if Some(j) == skip {
                continue;
            }
            let local = inv.transform_point(p);
            if local.coords.norm_squared() > self.max_range * self.max_range {
                continue;
            }
            if img.is_free(&local, factor, eps) == Some(true) {
                n += 1;
                if n >= stop_at {
                    break;
                }
            }
        }
        n
    }

    /// Free in at least `min_views` viewpoints at every window factor.
    pub fn free_at_all_factors(
        &self,
        p: &Point3<f64>,
        factors: &[usize],
        eps: f64,
        skip: Option<usize>,
        min_views: usize,
    ) -> bool {
        factors
            .iter()
            .all(|&f| self.free_count(p, f, eps, skip, min_views) >= min_views)
    }
}

#[derive(Clone, Debug)]
pub struct HdResult {
    /// Per keyframe, sensor frame.
    pub static_scans: Vec<PointCloud>,
    pub dynamic_scans: Vec<PointCloud>,
    /// Per keyframe, per point.
    pub dynamic: Vec<Vec<bool>>,
}

impl HdResult {
    pub fn dynamic_count(&self) -> usize {
        self.dynamic.iter().flatten().filter(|&&d| d).count()
    }

    pub fn point_count(&self) -> usize {
        self.dynamic.iter().map(Vec::len).sum()
    }

    /// Static map in the frame of `poses`, with the source keyframe of each point.
    pub fn static_map(&self, poses: &[Pose]) -> (PointCloud, Vec<usize>) {
        map_with_sources(&self.static_scans, poses)
    }

    pub fn dynamic_map(&self, poses: &[Pose]) -> PointCloud {
        map_with_sources(&self.dynamic_scans, poses).0
    }
}

/// Keyframes merged into one world-frame cloud, with the keyframe index of every point.
pub fn map_with_sources(scans: &[PointCloud], poses: &[Pose]) -> (PointCloud, Vec<usize>) {
    let moved: Vec<PointCloud> = scans
        .iter()
        .zip(poses)
        .map(|(s, p)| s.transformed(p))
        .collect();
    let sources = moved
        .iter()
        .enumerate()
        .flat_map(|(k, c)| std::iter::repeat_n(k, c.len()))
        .collect();
    (PointCloud::concat(moved.iter()), sources)
}

/// Remove-then-revert over `window_factors` in order: a map point is removed at
/// the first factor when some other keyframe sees through it, and reverted to
/// static at any later factor whose wider window no longer shows free space.
pub fn remove_hd(session: &SessionBundle, params: &RemovertParams) -> Result<HdResult> {
    remove_hd_scans(&session.clouds(), session.poses(), params)
}

pub fn remove_hd_scans(
    scans: &[&PointCloud],
    poses: &[Pose],
    params: &RemovertParams,
) -> Result<HdResult> {
    if scans.is_empty() {
        return Err(Error::EmptyInput("HD removal of an empty session".into()));
    }
    params.check()?;
    let views = Viewpoints::new(scans, poses, params)?;
    let dynamic: Vec<Vec<bool>> = scans
        .iter()
        .zip(poses)
        .enumerate()
        .map(|(k, (scan, pose))| {
            scan.points()
                .par_iter()
                .map(|q| {
                    let p = pose.transform_point(q);
                    views.free_at_all_factors(&p, &params.window_factors, params.eps_hd, Some(k), 1)
                })
                .collect()
        })
        .collect();
    let mut static_scans = Vec::with_capacity(scans.len());
    let mut dynamic_scans = Vec::with_capacity(scans.len());
    for (scan, flags) in scans.iter().zip(&dynamic) {
        static_scans.push(scan.filter(|i, _| !flags[i]));
        dynamic_scans.push(scan.filter(|i, _| flags[i]));
    }
    Ok(HdResult {
        static_scans,
        dynamic_scans,
        dynamic,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cloud::label;
    use crate::ltslam::ScanContextParams;
    use crate::simworld::{simulate_session, WorldSpec};

    fn params() -> RemovertParams {
        RemovertParams::for_sensor(32, 3.0, -25.0, 0.5, 25.0)
    }

    const WORLD: &str = "\
SENSOR channels=32 az_step=0.5 max_range=25 noise=0.01 seed=2
GROUND 0 -40 -40 40 40
BOX 8 6 1.5 3 3 3 static
BOX -4 -6 1 2 4 2 static
AGENT 4 -8 0.8 4 2 1.6 0 1.2 0 sessions=1
TRAJ 1 -10,0 14,0 spacing=1
";

    #[test]
    fn crossing_agent_is_removed_and_static_scene_kept() {
        let w = WorldSpec::parse(WORLD, "mem").unwrap();
        let s = simulate_session(&w, 1, &ScanContextParams::default()).unwrap();
        let hd = remove_hd(&s, &params()).unwrap();
        let (mut hd_total, mut hd_hit, mut st_total, mut st_hit) = (0, 0, 0, 0);
        for (k, flags) in s.keyframes.iter().zip(&hd.dynamic) {
            for (l, d) in k.cloud.labels().unwrap().iter().zip(flags) {
                if *l == label::HD {
                    hd_total += 1;
                    hd_hit += *d as usize;
                } else {
                    st_total += 1;
                    st_hit += *d as usize;
                }
            }
        }
        assert!(hd_total > 100);
        assert!(
            hd_hit as f64 >= 0.9 * hd_total as f64,
            "{hd_hit}/{hd_total}"
        );
        assert!(
            (st_hit as f64) <= 0.02 * st_total as f64,
            "{st_hit}/{st_total}"
        );
        assert_eq!(
            hd.dynamic_count() + hd.static_scans.iter().map(PointCloud::len).sum::<usize>(),
            hd.point_count()
        );
    }

    #[test]
    fn invariant_to_a_global_rigid_transform() {
        let w = WorldSpec::parse(WORLD, "mem").unwrap();
        let s = simulate_session(&w, 1, &ScanContextParams::default()).unwrap();
        let g = Pose::from_xyz_rpy(30.0, -12.0, 4.0, 0.0, 0.0, 2.0);
        let moved: Vec<Pose> = s.poses().iter().map(|p| g.compose(p)).collect();
        let a = remove_hd_scans(&s.clouds(), s.poses(), &params()).unwrap();
        let b = remove_hd_scans(&s.clouds(), &moved, &params()).unwrap();
        let differ = a
            .dynamic
            .iter()
            .flatten()
            .zip(b.dynamic.iter().flatten())
            .filter(|(x, y)| x != y)
            .count();
        assert!(differ as f64 <= 0.01 * a.point_count() as f64, "{differ}");
    }

    #[test]
    fn empty_session_is_an_error() {
        assert!(matches!(
            remove_hd_scans(&[], &[], &params()),
            Err(Error::EmptyInput(_))
        ));
    }
}
