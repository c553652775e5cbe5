//! Ground truth for change detection, derived from object membership and an
//! explicit line-of-sight raycast.

use std::collections::BTreeMap;

use nalgebra::Point3;

use super::raycast::cast;
use super::world::WorldSpec;
use crate::cloud::PointCloud;
use crate::error::{Error, Result};
use crate::geometry::Pose;
use crate::ltslam::SessionBundle;

#[derive(Clone, Debug)]
pub struct TruthLd {
    /// Points of `a` on objects absent from `b`, world frame.
    pub nd: PointCloud,
    /// Points of `b` on objects absent from `a`, world frame.
    pub pd: PointCloud,
}

/// Session membership of every box id; ground (id 0) and agents are not LD.
fn presence(world: &WorldSpec, a: u32, b: u32) -> BTreeMap<u32, (bool, bool)> {
    world
        .boxes
        .iter()
        .map(|o| (o.id, (o.present_in(a), o.present_in(b))))
        .collect()
}

/// World-frame points of a simulated session whose object satisfies `keep`.
pub fn world_points_where(
    bundle: &SessionBundle,
    mut keep: impl FnMut(u8, u32) -> bool,
) -> Result<PointCloud> {
    let gt = bundle.gt_poses.as_ref().ok_or_else(|| {
        Error::Invalid(format!("session {} has no ground-truth poses", bundle.id))
    })?;
    let mut parts = Vec::with_capacity(bundle.len());
    for (k, pose) in bundle.keyframes.iter().zip(gt) {
        let ids = k
            .object_ids
            .as_ref()
            .ok_or_else(|| Error::Invalid(format!("session {} has no object ids", bundle.id)))?;
        let labels = k
            .cloud
            .labels()
            .ok_or_else(|| Error::Invalid(format!("session {} has no class labels", bundle.id)))?;
        parts.push(
            k.cloud
                .filter(|i, _| keep(labels[i], ids[i]))
                .transformed(pose),
        );
    }
    Ok(PointCloud::concat(parts.iter()))
}

pub fn ground_truth_ld(world: &WorldSpec, a: &SessionBundle, b: &SessionBundle) -> Result<TruthLd> {
    let member = presence(world, a.id, b.id);
    let nd = world_points_where(a, |_, id| matches!(member.get(&id), Some((true, false))))?;
    let pd = world_points_where(b, |_, id| matches!(member.get(&id), Some((false, true))))?;
    Ok(TruthLd { nd, pd })
}

/// Whether `p` lies inside the sensor's field of view from `sensor` and no
/// primitive of `session` at time `t` blocks the line of sight by more than `tol`.
pub fn visible_from(
    world: &WorldSpec,
    session: u32,
    t: f64,
    sensor: &Pose,
    p: &Point3<f64>,
    tol: f64,
) -> bool {
    let s = &world.sensor;
    let o = Point3::from(*sensor.translation());
    let v = p - o;
    let range = v.norm();
    if range == 0.0 || range > s.max_range {
        return false;
    }
    let local = sensor.inverse().transform_vector(&v);
    let elevation = (local.z / range).asin().to_degrees();
    if elevation > s.fov_up || elevation < s.fov_down {
        return false;
    }
    match cast(world, session, t, &o, &(v / range), range) {
        Some(hit) => hit.range >= range - tol,
        None => true,
    }
}

/// True when no keyframe of `session` (at the given world poses) sees `p`.
pub fn occluded_in(
    world: &WorldSpec,
    session: u32,
    poses: &[Pose],
    p: &Point3<f64>,
    tol: f64,
) -> bool {
    !poses
        .iter()
        .enumerate()
        .any(|(k, pose)| visible_from(world, session, k as f64, pose, p, tol))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cloud::label;
    use crate::ltslam::ScanContextParams;
    use crate::simworld::simulate_session;

    // Query session 2 gains a wall at x = 6 that hides the ground patch behind it.
    const WORLD: &str = "\
SENSOR channels=16 az_step=1 max_range=25 noise=0 seed=1
GROUND 0 -30 -30 30 30
BOX 6 0 1.5 0.4 12 3 appear sessions=2 id=10
BOX 0 9 1 4 1 2 disappear sessions=1 id=11
BOX -8 -5 1 2 2 2 static id=12
TRAJ 1 -6,-2 2,-2 spacing=1
TRAJ 2 -6,-2 2,-2 spacing=1
";

    fn sessions() -> (WorldSpec, SessionBundle, SessionBundle) {
        let w = WorldSpec::parse(WORLD, "mem").unwrap();
        let sc = ScanContextParams::default();
        let a = simulate_session(&w, 1, &sc).unwrap();
        let b = simulate_session(&w, 2, &sc).unwrap();
        (w, a, b)
    }

    #[test]
    fn identical_membership_is_empty() {
        let (w, a, _) = sessions();
        let t = ground_truth_ld(&w, &a, &a).unwrap();
        assert!(t.nd.is_empty() && t.pd.is_empty());
    }

    #[test]
    fn appeared_box_is_pd_and_disappeared_box_is_nd() {
        let (w, a, b) = sessions();
        let t = ground_truth_ld(&w, &a, &b).unwrap();
        assert!(!t.pd.is_empty() && !t.nd.is_empty());
        assert!(t
            .pd
            .labels()
            .unwrap()
            .iter()
            .all(|&l| l == label::LD_APPEARING));
        assert!(t
            .nd
            .labels()
            .unwrap()
            .iter()
            .all(|&l| l == label::LD_DISAPPEARING));
        // swapping the sessions swaps the roles
        let r = ground_truth_ld(&w, &b, &a).unwrap();
        assert_eq!(r.nd.len(), t.pd.len());
        assert_eq!(r.pd.len(), t.nd.len());
    }

    #[test]
    fn ground_hidden_by_the_new_wall_is_not_nd() {
        let (w, a, b) = sessions();
        let t = ground_truth_ld(&w, &a, &b).unwrap();
        let ground = world_points_where(&a, |_, id| id == 0).unwrap();
        let gt_b = b.gt_poses.as_deref().unwrap();
        let hidden: Vec<Point3<f64>> = ground
            .points()
            .iter()
            .filter(|p| p.x > 6.5 && occluded_in(&w, 2, gt_b, p, 0.05))
            .copied()
            .collect();
        assert!(hidden.len() > 50, "{}", hidden.len());
        let nd = crate::voxel::voxelize(&t.nd, 0.05).unwrap();
        assert!(hidden.iter().all(|p| !nd.contains_point(p)));
        // the same ground is visible to the first session
        let gt_a = a.gt_poses.as_deref().unwrap();
        assert!(hidden.iter().all(|p| !occluded_in(&w, 1, gt_a, p, 0.05)));
    }
}
