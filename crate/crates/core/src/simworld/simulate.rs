use nalgebra::{Point3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use super::raycast::cast;
use super::world::{SensorSpec, SessionSpec, WorldSpec};
use crate::cloud::PointCloud;
use crate::error::{Error, Result};
use crate::geometry::{relative, Pose, Vec6};
use crate::ltslam::{PoseGraph, ScanContextParams, SessionBundle};

/// Odometry information never claims more certainty than this.
const MIN_SIGMA_T: f64 = 0.005;
const MIN_SIGMA_ROT_DEG: f64 = 0.01;

/// Unit beam direction in the sensor frame.
pub fn beam(sensor: &SensorSpec, channel: usize, column: usize) -> Vector3<f64> {
    let (e, a) = (sensor.elevation(channel), sensor.azimuth(column));
    Vector3::new(e.cos() * a.cos(), e.cos() * a.sin(), e.sin())
}

fn scan_rng(seed: u64, session: u32, stream: u32) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((session as u64) << 32) | stream as u64);
    rng
}

/// One scan from world pose `pose` at time `t`: sensor-frame points with class
/// labels, plus the object id of every point.
pub fn simulate_scan(
    world: &WorldSpec,
    session: u32,
    t: usize,
    pose: &Pose,
) -> (PointCloud, Vec<u32>) {
    let s = &world.sensor;
    let mut rng = scan_rng(s.seed, session, t as u32);
    let noise = (s.noise > 0.0).then(|| Normal::new(0.0, s.noise).expect("finite sigma"));
    let origin = Point3::from(*pose.translation());
    let mut pts = Vec::new();
    let mut labels = Vec::new();
    let mut ids = Vec::new();
    for c in 0..s.channels {
        for j in 0..s.columns() {
            let d = beam(s, c, j);
            let Some(hit) = cast(
                world,
                session,
                t as f64,
                &origin,
                &pose.transform_vector(&d),
                s.max_range,
            ) else {
                continue;
            };
            let r = match &noise {
                Some(n) => (hit.range + n.sample(&mut rng)).max(0.0),
                None => hit.range,
            };
            pts.push(Point3::from(d * r));
            labels.push(hit.label);
            ids.push(hit.object_id);
        }
    }
    let cloud = PointCloud::from_trusted(pts, Some(labels));
    (cloud, ids)
}

/// Ground-truth world poses of a session, checked against the world bounds.
pub fn ground_truth_trajectory(world: &WorldSpec, spec: &SessionSpec) -> Result<Vec<Pose>> {
    let traj = spec.trajectory();
    if let Some(g) = &world.ground {
        if let Some(k) = traj
            .iter()
            .position(|p| !g.contains_xy(p.translation().x, p.translation().y))
        {
            return Err(Error::Invalid(format!(
                "session {}: trajectory leaves the world bounds at keyframe {k}",
                spec.id
            )));
        }
    }
    Ok(traj)
}

/// Initial node values in the session frame: ground truth expressed relative
/// to the session origin, with odometry noise and yaw bias accumulated along the chain.
pub fn drifted_nodes(world: &WorldSpec, spec: &SessionSpec, truth: &[Pose]) -> Vec<Pose> {
    let local: Vec<Pose> = if spec.offset == Pose::identity() {
        truth.to_vec()
    } else {
        let inv = spec.offset.inverse();
        truth.iter().map(|p| inv.compose(p)).collect()
    };
    let d = spec.drift;
    if d.is_zero() || local.is_empty() {
        return local;
    }
    let mut rng = scan_rng(world.sensor.seed, spec.id, u32::MAX);
    let mut gauss = |sigma: f64| {
        if sigma > 0.0 {
            rng.sample(Normal::new(0.0, sigma).expect("finite sigma"))
        } else {
            0.0
        }
    };
    let mut nodes = vec![local[0]];
    for w in local.windows(2) {
        let z = relative(&w[0], &w[1]);
        let yaw = gauss(d.sigma_rot.to_radians()) + d.yaw_bias.to_radians();
        let noise = Pose::from_xyz_yaw(gauss(d.sigma_t), gauss(d.sigma_t), gauss(d.sigma_t), yaw);
        let last = *nodes.last().expect("non-empty");
        nodes.push(last.compose(&z.compose(&noise)));
    }
    nodes
}

/// Per-step odometry sigma; the yaw bias counts toward the rotation sigma.
pub fn odometry_sigma(spec: &SessionSpec) -> Vec6 {
    let t = spec.drift.sigma_t.max(MIN_SIGMA_T);
    let r = spec
        .drift
        .sigma_rot
        .hypot(spec.drift.yaw_bias)
        .max(MIN_SIGMA_ROT_DEG)
        .to_radians();
    Vec6::new(t, t, t, r, r, r)
}

/// Simulates every keyframe of `session`, returning a bundle whose graph holds
/// drifted session-frame poses and whose `gt_poses` hold world poses.
pub fn simulate_session(
    world: &WorldSpec,
    session: u32,
    sc: &ScanContextParams,
) -> Result<SessionBundle> {
    let spec = world.session(session)?;
    let truth = ground_truth_trajectory(world, spec)?;
    if truth.is_empty() {
        return Err(Error::EmptyInput(format!(
            "session {session} has an empty trajectory"
        )));
    }
    let scans: Vec<(PointCloud, Vec<u32>)> = truth
        .par_iter()
        .enumerate()
        .map(|(k, p)| simulate_scan(world, session, k, p))
        .collect();
    let nodes = drifted_nodes(world, spec, &truth);
    let graph = PoseGraph::from_chain(nodes, &odometry_sigma(spec));
    let (clouds, ids): (Vec<PointCloud>, Vec<Vec<u32>>) = scans.into_iter().unzip();
    let mut bundle = SessionBundle::new(session, graph, clouds, spec.spacing, sc)?;
    for (k, ids) in bundle.keyframes.iter_mut().zip(ids) {
        k.object_ids = Some(ids);
    }
    bundle.gt_poses = Some(truth);
    Ok(bundle)
}
