//! Point-to-point ICP with closed-form (SVD) rigid updates.

use nalgebra::{Matrix3, Point3, UnitQuaternion, Vector3};

use crate::cloud::PointCloud;
use crate::error::{Error, Result};
use crate::geometry::Pose;
use crate::spatial::{KdTree, SpatialIndex};

pub const MIN_POINTS: usize = 100;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IcpParams {
    pub max_corr_dist: f64,
    pub max_iters: usize,
    /// Stop once the norm of the incremental update falls below this.
    pub update_tol: f64,
}

impl Default for IcpParams {
    fn default() -> Self {
        Self {
            max_corr_dist: 2.0,
            max_iters: 50,
            update_tol: 1e-6,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IcpResult {
    /// Transform taking source coordinates into the target frame.
    pub pose: Pose,
    /// Mean squared distance over inlier correspondences at the final pose.
    pub fitness: f64,
    pub inliers: usize,
    pub iterations: usize,
}

/// Registers `source` onto `target`, starting from `initial`.
pub fn icp_register(
    source: &PointCloud,
    target: &PointCloud,
    initial: &Pose,
    params: &IcpParams,
) -> Result<IcpResult> {
    let tree = KdTree::new(target.points());
    icp_register_with_tree(source.points(), &tree, initial, params)
}

pub fn icp_register_with_tree(
    source: &[Point3<f64>],
    target: &KdTree,
    initial: &Pose,
    params: &IcpParams,
) -> Result<IcpResult> {
    if source.len() < MIN_POINTS || target.len() < MIN_POINTS {
        return Err(Error::DegenerateInput(format!(
            "ICP needs at least {MIN_POINTS} points per cloud, got {} and {}",
            source.len(),
            target.len()
        )));
    }
    let max_d2 = params.max_corr_dist * params.max_corr_dist;
    let mut pose = *initial;
    let mut iterations = 0;
    let mut moved: Vec<Point3<f64>> = vec![Point3::origin(); source.len()];
    for it in 0..params.max_iters {
        for (m, p) in moved.iter_mut().zip(source) {
            *m = pose.transform_point(p);
        }
        let mut src = Vec::new();
        let mut dst = Vec::new();
        for m in &moved {
            if let Some((j, d)) = target.nearest(m) {
                if d * d <= max_d2 {
                    src.push(*m);
                    dst.push(target.points()[j]);
                }
            }
        }
        if src.len() < 3 {
            if it == 0 {
                return Err(Error::RegistrationFailed(format!(
                    "no correspondences within {} m at the initial guess",
                    params.max_corr_dist
                )));
            }
            break;
        }
        let step = kabsch(&src, &dst);
        pose = step.compose(&pose);
        iterations = it + 1;
        if step.local_coordinates().norm() < params.update_tol {
            break;
        }
    }
    let (fitness, inliers) = fitness(source, target, &pose, max_d2);
    Ok(IcpResult {
        pose,
        fitness,
        inliers,
        iterations,
    })
}

/// Mean squared nearest-neighbour distance over source points within `max_d2` of the target.
fn fitness(source: &[Point3<f64>], target: &KdTree, pose: &Pose, max_d2: f64) -> (f64, usize) {
    let mut sum = 0.0;
    let mut n = 0;
    for p in source {
        if let Some((_, d)) = target.nearest(&pose.transform_point(p)) {
            if d * d <= max_d2 {
                sum += d * d;
                n += 1;
            }
        }
    }
    if n == 0 {
        (f64::INFINITY, 0)
    } else {
        (sum / n as f64, n)
    }
}

/// Least-squares rigid transform `T` minimizing `sum |T·src_i - dst_i|²`.
pub fn kabsch(src: &[Point3<f64>], dst: &[Point3<f64>]) -> Pose {
    let n = src.len() as f64;
    let cs = src.iter().fold(Vector3::zeros(), |a, p| a + p.coords) / n;
    let cd = dst.iter().fold(Vector3::zeros(), |a, p| a + p.coords) / n;
    let mut h = Matrix3::zeros();
    for (s, d) in src.iter().zip(dst) {
        h += (s.coords - cs) * (d.coords - cd).transpose();
    }
    let svd = h.svd(true, true);
    let u = svd.u.unwrap();
    let vt = svd.v_t.unwrap();
    let v = vt.transpose();
    let mut r = v * u.transpose();
    if r.determinant() < 0.0 {
        let mut fix = Matrix3::identity();
        fix[(2, 2)] = -1.0;
        r = v * fix * u.transpose();
    }
    let rot = UnitQuaternion::from_matrix(&r);
    Pose::new(cd - rot * cs, rot)
}
