//! Map versions and rollback along parent links.

use std::collections::BTreeMap;

use super::delta::{apply_delta, DeltaMap, Direction};
use crate::cloud::PointCloud;
use crate::error::{Error, Result};
use crate::geometry::Pose;
use crate::voxel::{voxelize, VoxelSet};

/// A map state: the root session's keyframes with their current local clouds.
/// A non-root version was produced from `parent` by the delta whose id equals
/// its own id.
#[derive(Clone, Debug, PartialEq)]
pub struct MapVersion {
    pub id: u32,
    /// Session whose observations this version reflects.
    pub session: u32,
    pub parent: Option<u32>,
    pub delta: Option<u32>,
    pub poses: Vec<Pose>,
    pub clouds: Vec<PointCloud>,
}

impl MapVersion {
    pub fn root(session: u32, poses: Vec<Pose>, clouds: Vec<PointCloud>) -> Result<MapVersion> {
        if poses.len() != clouds.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} poses for {} keyframe clouds",
                poses.len(),
                clouds.len()
            )));
        }
        Ok(MapVersion {
            id: 0,
            session,
            parent: None,
            delta: None,
            poses,
            clouds,
        })
    }

    pub fn len(&self) -> usize {
        self.clouds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clouds.is_empty()
    }

    pub fn point_count(&self) -> usize {
        self.clouds.iter().map(PointCloud::len).sum()
    }

    /// All keyframe clouds in the world frame.
    pub fn merged(&self) -> PointCloud {
        let moved: Vec<PointCloud> = self
            .clouds
            .iter()
            .zip(&self.poses)
            .map(|(c, p)| c.transformed(p))
            .collect();
        PointCloud::concat(moved.iter())
    }

    pub fn world_voxels(&self, resolution: f64) -> Result<VoxelSet> {
        voxelize(&self.merged(), resolution)
    }

    /// Mean per-keyframe voxel IoU against `other` in local frames.
    pub fn keyframe_iou(&self, other: &MapVersion, resolution: f64) -> Result<f64> {
        if self.len() != other.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} vs {} keyframes",
                self.len(),
                other.len()
            )));
        }
        if self.is_empty() {
            return Ok(1.0);
        }
        let mut sum = 0.0;
        for (a, b) in self.clouds.iter().zip(&other.clouds) {
            sum += voxelize(a, resolution)?.jaccard(&voxelize(b, resolution)?);
        }
        Ok(sum / self.len() as f64)
    }
}

/// Parent links and deltas of every version derived from one root.
#[derive(Clone, Debug, Default)]
pub struct VersionGraph {
    /// Child id → (parent id, session, delta producing the child).
    pub links: BTreeMap<u32, (u32, u32, DeltaMap)>,
}

impl VersionGraph {
    pub fn parent(&self, id: u32) -> Option<u32> {
        self.links.get(&id).map(|(p, _, _)| *p)
    }

    pub fn delta(&self, id: u32) -> Option<&DeltaMap> {
        self.links.get(&id).map(|(_, _, d)| d)
    }

    /// Ids from `id` up to its root, starting with `id`.
    pub fn ancestry(&self, id: u32) -> Vec<u32> {
        let mut out = vec![id];
        let mut cur = id;
        while let Some(p) = self.parent(cur) {
            if out.contains(&p) {
                break;
            }
            out.push(p);
            cur = p;
        }
        out
    }

    pub fn next_id(&self) -> u32 {
        self.links.keys().next_back().map_or(1, |&k| k + 1)
    }
}

/// Reverse-applies the deltas from `current` up to its ancestor `target`.
pub fn rollback(current: &MapVersion, target: u32, graph: &VersionGraph) -> Result<MapVersion> {
    let path = graph.ancestry(current.id);
    let Some(steps) = path.iter().position(|&v| v == target) else {
        return Err(Error::Unreachable(target));
    };
    let mut m = current.clone();
    for &v in &path[..steps] {
        let (parent, _, delta) = graph.links.get(&v).ok_or(Error::Unreachable(target))?;
        m = apply_delta(&m, delta, Direction::Reverse)?;
        m.id = *parent;
        m.parent = graph.parent(*parent);
        m.delta = m.parent.map(|_| *parent);
    }
    Ok(m)
}

/// Replays deltas forward from `root` to `target`.
pub fn materialize(root: &MapVersion, target: u32, graph: &VersionGraph) -> Result<MapVersion> {
    let path = graph.ancestry(target);
    if *path.last().expect("non-empty") != root.id {
        return Err(Error::Unreachable(target));
    }
    let mut m = root.clone();
    for &v in path.iter().rev().skip(1) {
        let delta = graph.delta(v).ok_or(Error::Unreachable(target))?;
        m = apply_delta(&m, delta, Direction::Forward)?;
        m.id = v;
        m.parent = graph.parent(v);
        m.delta = Some(v);
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ltmap::delta::build_delta;
    use nalgebra::Point3;

    fn block(x0: f64, y0: f64, n: usize) -> Vec<Point3<f64>> {
        let mut pts = Vec::new();
        for i in 0..n {
            for j in 0..n {
                pts.push(Point3::new(x0 + i as f64 * 0.1, y0 + j as f64 * 0.1, 0.5));
            }
        }
        pts
    }

    fn ground(n: usize) -> PointCloud {
        let mut pts = Vec::new();
        for i in 0..n {
            for j in 0..n {
                pts.push(Point3::new(
                    i as f64 * 0.25 - 5.0,
                    j as f64 * 0.25 - 5.0,
                    0.0,
                ));
            }
        }
        PointCloud::new(pts).unwrap()
    }

    /// Three versions: a block is removed, then another is added.
    fn chain() -> (MapVersion, VersionGraph, Vec<MapVersion>) {
        let poses = vec![
            Pose::from_xyz_yaw(0.0, 0.0, 0.0, 0.0),
            Pose::from_xyz_yaw(2.0, 1.0, 0.0, 0.5),
        ];
        let mut c0 = ground(40);
        c0.append(&PointCloud::new(block(1.0, 1.0, 8)).unwrap());
        let root = MapVersion::root(1, poses.clone(), vec![c0, ground(40)]).unwrap();
        let mut graph = VersionGraph::default();
        let nd = PointCloud::new(block(1.0, 1.0, 8)).unwrap();
        let d1 = build_delta(&root, 2, &nd, &PointCloud::empty(), 0.2, 30.0).unwrap();
        let mut v1 = apply_delta(&root, &d1, Direction::Forward).unwrap();
        v1.id = graph.next_id();
        graph.links.insert(v1.id, (root.id, 2, d1));
        let pd = PointCloud::new(
            block(-3.0, -3.0, 6)
                .into_iter()
                .map(|p| p + nalgebra::Vector3::new(0.0, 0.0, 1.0))
                .collect(),
        )
        .unwrap();
        let d2 = build_delta(&v1, 3, &PointCloud::empty(), &pd, 0.2, 30.0).unwrap();
        let mut v2 = apply_delta(&v1, &d2, Direction::Forward).unwrap();
        v2.id = graph.next_id();
        graph.links.insert(v2.id, (v1.id, 3, d2));
        (root.clone(), graph, vec![root, v1, v2])
    }

    #[test]
    fn rollback_to_self_is_unchanged() {
        let (_, graph, v) = chain();
        assert_eq!(rollback(&v[2], 2, &graph).unwrap().clouds, v[2].clouds);
    }

    #[test]
    fn two_steps_back_matches_the_held_out_root() {
        let (_, graph, v) = chain();
        let back = rollback(&v[2], 0, &graph).unwrap();
        assert_eq!(back.id, 0);
        assert_eq!(back.session, 1);
        assert!(back.keyframe_iou(&v[0], 0.2).unwrap() >= 0.98);
        assert!(
            back.world_voxels(0.2)
                .unwrap()
                .jaccard(&v[0].world_voxels(0.2).unwrap())
                >= 0.98
        );
    }

    #[test]
    fn rollback_then_replay_returns_to_current() {
        let (root, graph, v) = chain();
        let back = rollback(&v[2], 1, &graph).unwrap();
        assert!(back.keyframe_iou(&v[1], 0.2).unwrap() >= 0.98);
        let again = materialize(&root, 2, &graph).unwrap();
        assert!(again.keyframe_iou(&v[2], 0.2).unwrap() >= 0.98);
        assert_eq!(again.session, 3);
    }

    #[test]
    fn unreachable_target_is_an_error() {
        let (_, graph, v) = chain();
        assert!(matches!(
            rollback(&v[1], 2, &graph),
            Err(Error::Unreachable(2))
        ));
        assert!(matches!(
            rollback(&v[2], 9, &graph),
            Err(Error::Unreachable(9))
        ));
    }
}
