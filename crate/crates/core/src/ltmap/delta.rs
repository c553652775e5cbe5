//! Per-keyframe delta maps and the composition operator.

use std::collections::BTreeMap;

use nalgebra::Point3;
use rayon::prelude::*;

use super::version::MapVersion;
use crate::cloud::PointCloud;
use crate::error::{Error, Result};
use crate::geometry::Pose;
use crate::spatial::{KdTree, SpatialIndex};
use crate::voxel::{cloud_minus, voxelize, VoxelKey, VoxelSet};

/// Change of one keyframe, in its local frame.
#[derive(Clone, Debug, PartialEq)]
pub struct KeyframeDelta {
    pub nd_region: VoxelSet,
    /// The points the region removes from the base, kept for reversal.
    pub nd_points: PointCloud,
    pub pd_points: PointCloud,
}

impl KeyframeDelta {
    pub fn empty(resolution: f64) -> Result<KeyframeDelta> {
        Ok(KeyframeDelta {
            nd_region: VoxelSet::new(resolution)?,
            nd_points: PointCloud::empty(),
            pd_points: PointCloud::empty(),
        })
    }

    pub fn is_empty(&self) -> bool {
        self.nd_region.is_empty() && self.nd_points.is_empty() && self.pd_points.is_empty()
    }

    pub fn forward(&self, base: &PointCloud) -> PointCloud {
        let mut out = cloud_minus(base, &self.nd_region);
        out.append(&self.pd_points);
        out
    }

    pub fn reverse(&self, base: &PointCloud) -> PointCloud {
        let added = voxelize(&self.pd_points, self.nd_region.resolution())
            .expect("resolution checked at construction");
        let mut out = cloud_minus(base, &added);
        out.append(&self.nd_points);
        out
    }
}

/// Change from `from_session` to `to_session`, keyed by keyframe index of the
/// root map. Unchanged keyframes have no entry.
#[derive(Clone, Debug, PartialEq)]
pub struct DeltaMap {
    pub from_session: u32,
    pub to_session: u32,
    pub resolution: f64,
    /// World poses of the keyframes the local frames refer to.
    pub poses: Vec<Pose>,
    pub keyframes: BTreeMap<usize, KeyframeDelta>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Reverse,
}

impl DeltaMap {
    pub fn empty(
        from_session: u32,
        to_session: u32,
        resolution: f64,
        poses: Vec<Pose>,
    ) -> Result<DeltaMap> {
        VoxelSet::new(resolution)?;
        Ok(DeltaMap {
            from_session,
            to_session,
            resolution,
            poses,
            keyframes: BTreeMap::new(),
        })
    }

    pub fn is_empty(&self) -> bool {
        self.keyframes.values().all(KeyframeDelta::is_empty)
    }

    pub fn changed_keyframes(&self) -> Vec<usize> {
        self.keyframes
            .iter()
            .filter(|(_, d)| !d.is_empty())
            .map(|(&i, _)| i)
            .collect()
    }

    pub fn nd_point_count(&self) -> usize {
        self.keyframes.values().map(|d| d.nd_points.len()).sum()
    }

    pub fn pd_point_count(&self) -> usize {
        self.keyframes.values().map(|d| d.pd_points.len()).sum()
    }

    /// Added points in the world frame.
    pub fn pd_world(&self) -> PointCloud {
        let moved: Vec<PointCloud> = self
            .keyframes
            .iter()
            .map(|(&i, d)| d.pd_points.transformed(&self.poses[i]))
            .collect();
        PointCloud::concat(moved.iter())
    }

    /// Removed points in the world frame.
    pub fn nd_world(&self) -> PointCloud {
        let moved: Vec<PointCloud> = self
            .keyframes
            .iter()
            .map(|(&i, d)| d.nd_points.transformed(&self.poses[i]))
            .collect();
        PointCloud::concat(moved.iter())
    }

    fn check_keyframes(&self, n: usize) -> Result<()> {
        if self.poses.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "delta covers {} keyframes, map has {n}",
                self.poses.len()
            )));
        }
        match self.keyframes.keys().next_back() {
            Some(&i) if i >= n => Err(Error::DimensionMismatch(format!(
                "delta keyframe {i} not in a map of {n}"
            ))),
            _ => Ok(()),
        }
    }
}

/// Builds the delta that removes `nd_world` and adds `pd_world` (world frame)
/// to `base`.
///
/// Every keyframe within `assoc_range` of an ND point gets the voxels of its
/// own points that the ND set covers, so the removal reaches every keyframe
/// that observed the vanished structure. PD points are grouped by world voxel
/// and each voxel goes to the keyframe nearest its centre; voxels the base
/// still occupies after the removal are skipped, as they add nothing new.
pub fn build_delta(
    base: &MapVersion,
    to_session: u32,
    nd_world: &PointCloud,
    pd_world: &PointCloud,
    resolution: f64,
    assoc_range: f64,
) -> Result<DeltaMap> {
    let mut delta = DeltaMap::empty(base.session, to_session, resolution, base.poses.clone())?;
    if assoc_range <= 0.0 {
        return Err(Error::Config(format!(
            "association range must be positive, got {assoc_range}"
        )));
    }
    let n = base.poses.len();
    if n == 0 {
        return Ok(delta);
    }
    let centres: Vec<Point3<f64>> = base
        .poses
        .iter()
        .map(|p| Point3::from(*p.translation()))
        .collect();
    let tree = KdTree::new(&centres);

    let mut nd_for: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (j, p) in nd_world.points().iter().enumerate() {
        for i in tree.within(p, assoc_range) {
            nd_for[i].push(j);
        }
    }
    let removed: Vec<(PointCloud, VoxelSet)> = (0..n)
        .into_par_iter()
        .map(|i| -> Result<(PointCloud, VoxelSet)> {
            if nd_for[i].is_empty() {
                return Ok((PointCloud::empty(), VoxelSet::new(resolution)?));
            }
            let local = nd_world
                .select(&nd_for[i])
                .transformed(&base.poses[i].inverse());
            let region = voxelize(&local, resolution)?;
            let hit = base.clouds[i].filter(|_, p| region.contains_point(p));
            let region = voxelize(&hit, resolution)?;
            Ok((hit, region))
        })
        .collect::<Result<Vec<_>>>()?;

    let occupied: std::collections::HashSet<VoxelKey> = base
        .clouds
        .par_iter()
        .zip(&removed)
        .zip(&base.poses)
        .flat_map_iter(|((cloud, (_, region)), pose)| {
            cloud
                .points()
                .iter()
                .filter(|p| !region.contains_point(p))
                .map(|p| VoxelKey::of(&pose.transform_point(p), resolution))
                .collect::<Vec<_>>()
        })
        .collect();
    let mut voxels: BTreeMap<VoxelKey, Vec<usize>> = BTreeMap::new();
    for (j, p) in pd_world.points().iter().enumerate() {
        let key = VoxelKey::of(p, resolution);
        if !occupied.contains(&key) {
            voxels.entry(key).or_default().push(j);
        }
    }
    let mut pd_for: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (key, idx) in &voxels {
        let (i, _) = tree
            .nearest(&key.center(resolution))
            .expect("non-empty tree");
        pd_for[i].extend_from_slice(idx);
    }

    for (i, (nd_points, nd_region)) in removed.into_iter().enumerate() {
        let pd_points = if pd_for[i].is_empty() {
            PointCloud::empty()
        } else {
            pd_world
                .select(&pd_for[i])
                .transformed(&base.poses[i].inverse())
        };
        let kd = KeyframeDelta {
            nd_region,
            nd_points,
            pd_points,
        };
        if !kd.is_empty() {
            delta.keyframes.insert(i, kd);
        }
    }
    Ok(delta)
}

/// The composition operator: forward removes the ND region then adds the PD
/// points; reverse removes the PD voxels then restores the ND points.
pub fn apply_delta(
    base: &MapVersion,
    delta: &DeltaMap,
    direction: Direction,
) -> Result<MapVersion> {
    let (expected, next) = match direction {
        Direction::Forward => (delta.from_session, delta.to_session),
        Direction::Reverse => (delta.to_session, delta.from_session),
    };
    if base.session != expected {
        return Err(Error::SessionMismatch {
            expected,
            found: base.session,
        });
    }
    delta.check_keyframes(base.clouds.len())?;
    let clouds: Vec<PointCloud> = base
        .clouds
        .par_iter()
        .enumerate()
        .map(|(i, c)| match (delta.keyframes.get(&i), direction) {
            (None, _) => c.clone(),
            (Some(d), Direction::Forward) => d.forward(c),
            (Some(d), Direction::Reverse) => d.reverse(c),
        })
        .collect();
    let (id, parent) = match direction {
        Direction::Forward => (base.id + 1, Some(base.id)),
        Direction::Reverse => (base.parent.unwrap_or(base.id), None),
    };
    Ok(MapVersion {
        id,
        session: next,
        parent,
        delta: (direction == Direction::Forward).then_some(id),
        poses: base.poses.clone(),
        clouds,
    })
}

/// One delta equivalent to applying `ab` then `bc`:
/// region `Nab ∪ Nbc`, restored points `NDab ∪ (NDbc − vox(PDab))`, added
/// points `(PDab − Nbc) + PDbc`.
pub fn chain_deltas(ab: &DeltaMap, bc: &DeltaMap) -> Result<DeltaMap> {
    if ab.to_session != bc.from_session {
        return Err(Error::SessionMismatch {
            expected: ab.to_session,
            found: bc.from_session,
        });
    }
    if ab.resolution != bc.resolution {
        return Err(Error::Config(format!(
            "cannot chain deltas at resolutions {} and {}",
            ab.resolution, bc.resolution
        )));
    }
    ab.check_keyframes(bc.poses.len())?;
    bc.check_keyframes(ab.poses.len())?;
    let r = ab.resolution;
    let mut out = DeltaMap::empty(ab.from_session, bc.to_session, r, ab.poses.clone())?;
    let ids: std::collections::BTreeSet<usize> = ab
        .keyframes
        .keys()
        .chain(bc.keyframes.keys())
        .copied()
        .collect();
    let empty = KeyframeDelta::empty(r)?;
    for i in ids {
        let d1 = ab.keyframes.get(&i).unwrap_or(&empty);
        let d2 = bc.keyframes.get(&i).unwrap_or(&empty);
        let pd1_vox = voxelize(&d1.pd_points, r)?;
        let mut nd_points = d1.nd_points.clone();
        nd_points.append(&cloud_minus(&d2.nd_points, &pd1_vox));
        let mut pd_points = cloud_minus(&d1.pd_points, &d2.nd_region);
        pd_points.append(&d2.pd_points);
        let kd = KeyframeDelta {
            nd_region: d1.nd_region.union(&d2.nd_region),
            nd_points,
            pd_points,
        };
        if !kd.is_empty() {
            out.keyframes.insert(i, kd);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const RES: f64 = 0.5;

    fn random_cloud(rng: &mut ChaCha8Rng, n: usize) -> PointCloud {
        PointCloud::new(
            (0..n)
                .map(|_| {
                    Point3::new(
                        rng.random_range(-4.0..4.0),
                        rng.random_range(-4.0..4.0),
                        rng.random_range(0.0..2.0),
                    )
                })
                .collect(),
        )
        .unwrap()
    }

    fn version(rng: &mut ChaCha8Rng, kf: usize) -> MapVersion {
        MapVersion::root(
            1,
            (0..kf)
                .map(|i| Pose::from_xyz_yaw(i as f64 * 3.0, 0.0, 0.0, 0.3 * i as f64))
                .collect(),
            (0..kf).map(|_| random_cloud(rng, 300)).collect(),
        )
        .unwrap()
    }

    fn random_delta(rng: &mut ChaCha8Rng, base: &MapVersion, from: u32, to: u32) -> DeltaMap {
        let mut d = DeltaMap::empty(from, to, RES, base.poses.clone()).unwrap();
        for i in 0..base.clouds.len() {
            if rng.random_bool(0.3) {
                continue;
            }
            let cut = random_cloud(rng, 20);
            let region = voxelize(&cut, RES).unwrap();
            let nd_points = base.clouds[i].filter(|_, p| region.contains_point(p));
            d.keyframes.insert(
                i,
                KeyframeDelta {
                    nd_region: region,
                    nd_points,
                    pd_points: random_cloud(rng, 40),
                },
            );
        }
        d
    }

    fn same_voxels(a: &MapVersion, b: &MapVersion) -> bool {
        a.clouds
            .iter()
            .zip(&b.clouds)
            .all(|(x, y)| voxelize(x, 0.05).unwrap() == voxelize(y, 0.05).unwrap())
    }

    #[test]
    fn empty_delta_is_exact_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let base = version(&mut rng, 4);
        let d = DeltaMap::empty(1, 2, RES, base.poses.clone()).unwrap();
        let out = apply_delta(&base, &d, Direction::Forward).unwrap();
        assert_eq!(out.clouds, base.clouds);
        assert_eq!(out.session, 2);
    }

    #[test]
    fn session_mismatch_is_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let base = version(&mut rng, 2);
        let d = DeltaMap::empty(5, 6, RES, base.poses.clone()).unwrap();
        assert!(matches!(
            apply_delta(&base, &d, Direction::Forward),
            Err(Error::SessionMismatch { .. })
        ));
        assert!(matches!(
            apply_delta(&base, &d, Direction::Reverse),
            Err(Error::SessionMismatch { .. })
        ));
        let other = DeltaMap::empty(3, 4, RES, base.poses.clone()).unwrap();
        assert!(matches!(
            chain_deltas(&d, &other),
            Err(Error::SessionMismatch { .. })
        ));
    }

    #[test]
    fn forward_matches_pointwise_definition() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let base = version(&mut rng, 3);
        let d = random_delta(&mut rng, &base, 1, 2);
        let out = apply_delta(&base, &d, Direction::Forward).unwrap();
        for (i, (b, o)) in base.clouds.iter().zip(&out.clouds).enumerate() {
            // oracle: explicit floor-cell comparison against the region keys
            let mut expect: Vec<Point3<f64>> = b
                .points()
                .iter()
                .filter(|p| match d.keyframes.get(&i) {
                    Some(k) => !k
                        .nd_region
                        .sorted_keys()
                        .iter()
                        .any(|key| (0..3).all(|a| (p[a] / RES).floor() as i64 == key.0[a])),
                    None => true,
                })
                .copied()
                .collect();
            if let Some(k) = d.keyframes.get(&i) {
                expect.extend_from_slice(k.pd_points.points());
            }
            assert_eq!(o.points(), &expect[..]);
        }
    }

    #[test]
    fn chain_with_empty_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let base = version(&mut rng, 4);
        let d = random_delta(&mut rng, &base, 1, 2);
        let e = DeltaMap::empty(2, 2, RES, base.poses.clone()).unwrap();
        let c = chain_deltas(&d, &e).unwrap();
        assert_eq!(c.keyframes, d.keyframes);
        assert_eq!((c.from_session, c.to_session), (1, 2));
    }

    #[test]
    fn build_delta_removes_nd_everywhere_and_adds_pd_once() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let base = version(&mut rng, 5);
        let world = base.merged();
        // a world-frame block that every keyframe observes
        let nd = world.filter(|_, p| (0.0..2.0).contains(&p.x) && (0.0..2.0).contains(&p.y));
        let pd = random_cloud(&mut rng, 100).transformed(&Pose::from_translation(0.0, 0.0, 10.0));
        let d = build_delta(&base, 2, &nd, &pd, RES, 50.0).unwrap();
        assert_eq!(d.pd_point_count(), pd.len());
        let out = apply_delta(&base, &d, Direction::Forward).unwrap();
        let merged = out.merged();
        let region = voxelize(&nd, 0.01).unwrap();
        assert!(!merged.points().iter().any(|p| region.contains_point(p)));
        assert_eq!(merged.len(), world.len() - d.nd_point_count() + pd.len());
    }

    #[test]
    fn pd_on_structure_the_map_already_holds_is_skipped() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let base = version(&mut rng, 3);
        let world = base.merged();
        // re-observed points of the base, plus points into a voxel the ND empties
        let seen = world.select(&(0..50).collect::<Vec<_>>());
        let d = build_delta(&base, 2, &PointCloud::empty(), &seen, RES, 50.0).unwrap();
        assert!(d.is_empty());
        let d = build_delta(&base, 2, &seen, &seen, RES, 50.0).unwrap();
        assert!(d.pd_point_count() > 0);
        let kept = apply_delta(
            &base,
            &DeltaMap {
                keyframes: d
                    .keyframes
                    .iter()
                    .map(|(&i, k)| {
                        (
                            i,
                            KeyframeDelta {
                                pd_points: PointCloud::empty(),
                                ..k.clone()
                            },
                        )
                    })
                    .collect(),
                ..d.clone()
            },
            Direction::Forward,
        )
        .unwrap();
        let kept = voxelize(&kept.merged(), RES).unwrap();
        assert!(d
            .pd_world()
            .points()
            .iter()
            .all(|p| !kept.contains_point(p)));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn chained_equals_sequential(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let m = version(&mut rng, 4);
            let d1 = random_delta(&mut rng, &m, 1, 2);
            let b = apply_delta(&m, &d1, Direction::Forward).unwrap();
            let d2 = random_delta(&mut rng, &b, 2, 3);
            let seq = apply_delta(&b, &d2, Direction::Forward).unwrap();
            let chained = apply_delta(&m, &chain_deltas(&d1, &d2).unwrap(), Direction::Forward).unwrap();
            for (x, y) in seq.clouds.iter().zip(&chained.clouds) {
                let mut a: Vec<[u64; 3]> = x.points().iter().map(|p| [p.x.to_bits(), p.y.to_bits(), p.z.to_bits()]).collect();
                let mut c: Vec<[u64; 3]> = y.points().iter().map(|p| [p.x.to_bits(), p.y.to_bits(), p.z.to_bits()]).collect();
                a.sort_unstable();
                c.sort_unstable();
                prop_assert_eq!(a, c);
            }
        }

        #[test]
        fn forward_then_reverse_restores_the_base(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let m = version(&mut rng, 3);
            let mut d = random_delta(&mut rng, &m, 1, 2);
            // additions above the base, in voxels it does not occupy
            for k in d.keyframes.values_mut() {
                k.pd_points = k.pd_points.transformed(&Pose::from_translation(0.0, 0.0, 5.0));
            }
            let fwd = apply_delta(&m, &d, Direction::Forward).unwrap();
            let back = apply_delta(&fwd, &d, Direction::Reverse).unwrap();
            prop_assert!(same_voxels(&m, &back));
        }
    }
}
