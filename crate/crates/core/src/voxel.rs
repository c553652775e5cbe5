//! Voxel-membership set algebra. Set difference and union on continuous points
//! are realized by testing the integer cell `floor(p / resolution)`.

use std::collections::HashSet;

use nalgebra::Point3;

use crate::cloud::PointCloud;
use crate::error::{Error, Result};

pub const DEFAULT_RESOLUTION: f64 = 0.2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VoxelKey(pub [i64; 3]);

impl VoxelKey {
    pub fn of(p: &Point3<f64>, resolution: f64) -> VoxelKey {
        VoxelKey([
            (p.x / resolution).floor() as i64,
            (p.y / resolution).floor() as i64,
            (p.z / resolution).floor() as i64,
        ])
    }

    pub fn center(&self, resolution: f64) -> Point3<f64> {
        Point3::new(
            (self.0[0] as f64 + 0.5) * resolution,
            (self.0[1] as f64 + 0.5) * resolution,
            (self.0[2] as f64 + 0.5) * resolution,
        )
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct VoxelSet {
    resolution: f64,
    keys: HashSet<VoxelKey>,
}

impl VoxelSet {
    pub fn new(resolution: f64) -> Result<VoxelSet> {
        check_resolution(resolution)?;
        Ok(VoxelSet {
            resolution,
            keys: HashSet::new(),
        })
    }

    pub fn from_keys(
        resolution: f64,
        keys: impl IntoIterator<Item = VoxelKey>,
    ) -> Result<VoxelSet> {
        check_resolution(resolution)?;
        Ok(VoxelSet {
            resolution,
            keys: keys.into_iter().collect(),
        })
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn insert(&mut self, key: VoxelKey) -> bool {
        self.keys.insert(key)
    }

    pub fn contains(&self, key: &VoxelKey) -> bool {
        self.keys.contains(key)
    }

    pub fn contains_point(&self, p: &Point3<f64>) -> bool {
        self.keys.contains(&VoxelKey::of(p, self.resolution))
    }

    pub fn iter(&self) -> impl Iterator<Item = &VoxelKey> {
        self.keys.iter()
    }

    /// Keys in ascending order, for deterministic output.
    pub fn sorted_keys(&self) -> Vec<VoxelKey> {
        let mut v: Vec<VoxelKey> = self.keys.iter().copied().collect();
        v.sort_unstable();
        v
    }

    pub fn union(&self, other: &VoxelSet) -> VoxelSet {
        self.assert_compatible(other);
        VoxelSet {
            resolution: self.resolution,
            keys: self.keys.union(&other.keys).copied().collect(),
        }
    }

    pub fn difference(&self, other: &VoxelSet) -> VoxelSet {
        self.assert_compatible(other);
        VoxelSet {
            resolution: self.resolution,
            keys: self.keys.difference(&other.keys).copied().collect(),
        }
    }

    pub fn intersection(&self, other: &VoxelSet) -> VoxelSet {
        self.assert_compatible(other);
        VoxelSet {
            resolution: self.resolution,
            keys: self.keys.intersection(&other.keys).copied().collect(),
        }
    }

    pub fn intersection_len(&self, other: &VoxelSet) -> usize {
        self.assert_compatible(other);
        let (small, large) = if self.len() <= other.len() {
            (self, other)
        } else {
            (other, self)
        };
        small.keys.iter().filter(|k| large.keys.contains(k)).count()
    }

    /// Intersection over union; two empty sets are identical (1.0).
    pub fn jaccard(&self, other: &VoxelSet) -> f64 {
        let inter = self.intersection_len(other);
        let uni = self.len() + other.len() - inter;
        if uni == 0 {
            1.0
        } else {
            inter as f64 / uni as f64
        }
    }

    fn assert_compatible(&self, other: &VoxelSet) {
        assert!(
            self.resolution == other.resolution,
            "voxel resolution mismatch: {} vs {}",
            self.resolution,
            other.resolution
        );
    }
}

fn check_resolution(resolution: f64) -> Result<()> {
    if resolution > 0.0 && resolution.is_finite() {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "voxel resolution must be positive, got {resolution}"
        )))
    }
}

pub fn voxelize(cloud: &PointCloud, resolution: f64) -> Result<VoxelSet> {
    check_resolution(resolution)?;
    Ok(VoxelSet {
        resolution,
        keys: cloud
            .points()
            .iter()
            .map(|p| VoxelKey::of(p, resolution))
            .collect(),
    })
}

/// Points of `a` whose voxel is not in `region`, order preserved.
pub fn cloud_minus(a: &PointCloud, region: &VoxelSet) -> PointCloud {
    if region.is_empty() {
        return a.clone();
    }
    a.filter(|_, p| !region.contains_point(p))
}

/// First point of every occupied voxel, in input order.
pub fn downsample(cloud: &PointCloud, resolution: f64) -> Result<PointCloud> {
    Ok(cloud.select(&downsample_indices(cloud.points(), resolution)?))
}

pub fn downsample_indices(points: &[Point3<f64>], resolution: f64) -> Result<Vec<usize>> {
    check_resolution(resolution)?;
    let mut seen = HashSet::with_capacity(points.len() / 2);
    Ok(points
        .iter()
        .enumerate()
        .filter(|(_, p)| seen.insert(VoxelKey::of(p, resolution)))
        .map(|(i, _)| i)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cloud(points: &[[f64; 3]]) -> PointCloud {
        PointCloud::new(points.iter().map(|p| Point3::from(*p)).collect()).unwrap()
    }

    #[test]
    fn same_cell_collapses() {
        let v = voxelize(&cloud(&[[0.1, 0.1, 0.1], [0.15, 0.12, 0.11]]), 0.5).unwrap();
        assert_eq!(v.sorted_keys(), vec![VoxelKey([0, 0, 0])]);
    }

    #[test]
    fn empty_and_bad_resolution() {
        assert!(voxelize(&PointCloud::empty(), 0.2).unwrap().is_empty());
        assert!(matches!(
            voxelize(&PointCloud::empty(), 0.0),
            Err(Error::Config(_))
        ));
        assert!(voxelize(&PointCloud::empty(), -1.0).is_err());
    }

    #[test]
    fn negative_coordinates_floor_down() {
        let v = voxelize(&cloud(&[[-0.01, -0.5, 0.49]]), 0.5).unwrap();
        assert_eq!(v.sorted_keys(), vec![VoxelKey([-1, -1, 0])]);
    }

    #[test]
    fn key_count_matches_brute_force_distinct_cells() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pts: Vec<[f64; 3]> = (0..1000)
            .map(|_| {
                [
                    rng.random_range(0.0..10.0),
                    rng.random_range(0.0..10.0),
                    rng.random_range(0.0..10.0),
                ]
            })
            .collect();
        // oracle: quadratic distinct-cell scan
        let mut cells: Vec<[i64; 3]> = Vec::new();
        for p in &pts {
            let c = [
                (p[0] / 0.5).floor() as i64,
                (p[1] / 0.5).floor() as i64,
                (p[2] / 0.5).floor() as i64,
            ];
            if !cells.contains(&c) {
                cells.push(c);
            }
        }
        let v = voxelize(&cloud(&pts), 0.5).unwrap();
        assert_eq!(v.len(), cells.len());
        assert!(v.len() <= pts.len());
    }

    #[test]
    fn minus_edge_cases() {
        let a = cloud(&[[0.0, 0.0, 0.0], [1.0, 1.0, 1.0], [2.5, 0.0, 0.0]]);
        assert_eq!(cloud_minus(&a, &VoxelSet::new(0.2).unwrap()), a);
        assert!(cloud_minus(&a, &voxelize(&a, 0.2).unwrap()).is_empty());
    }

    #[test]
    fn minus_matches_brute_force_membership() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let pts = |rng: &mut ChaCha8Rng, n| -> Vec<[f64; 3]> {
            (0..n)
                .map(|_| {
                    [
                        rng.random_range(-3.0..3.0),
                        rng.random_range(-3.0..3.0),
                        rng.random_range(0.0..2.0),
                    ]
                })
                .collect()
        };
        let a = cloud(&pts(&mut rng, 500));
        let b = cloud(&pts(&mut rng, 300));
        let region = voxelize(&b, 0.4).unwrap();
        let got = cloud_minus(&a, &region);
        let expected: Vec<Point3<f64>> = a
            .points()
            .iter()
            .filter(|p| {
                !b.points()
                    .iter()
                    .any(|q| (0..3).all(|k| (p[k] / 0.4).floor() == (q[k] / 0.4).floor()))
            })
            .copied()
            .collect();
        assert_eq!(got.points(), &expected[..]);
    }

    #[test]
    fn downsample_keeps_first_point_per_cell() {
        let a = cloud(&[[0.01, 0.0, 0.0], [0.02, 0.0, 0.0], [0.5, 0.0, 0.0]]);
        let d = downsample(&a, 0.2).unwrap();
        assert_eq!(
            d.points(),
            &[Point3::new(0.01, 0.0, 0.0), Point3::new(0.5, 0.0, 0.0)]
        );
    }

    proptest! {
        #[test]
        fn voxelize_is_order_invariant_and_set_laws_hold(
            raw in proptest::collection::vec((-5.0..5.0f64, -5.0..5.0f64, -5.0..5.0f64), 0..200),
            seed in any::<u64>(),
        ) {
            let pts: Vec<[f64; 3]> = raw.iter().map(|&(x, y, z)| [x, y, z]).collect();
            let mut shuffled = pts.clone();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for i in (1..shuffled.len()).rev() {
                shuffled.swap(i, rng.random_range(0..=i));
            }
            let a = voxelize(&cloud(&pts), 0.3).unwrap();
            let b = voxelize(&cloud(&shuffled), 0.3).unwrap();
            prop_assert_eq!(&a, &b);
            prop_assert_eq!(a.union(&a), a.clone());
            prop_assert!(a.difference(&a).is_empty());
        }

        #[test]
        fn minus_is_idempotent(
            raw in proptest::collection::vec((-2.0..2.0f64, -2.0..2.0f64, -2.0..2.0f64), 0..150),
            cut in proptest::collection::vec((-2.0..2.0f64, -2.0..2.0f64, -2.0..2.0f64), 0..50),
        ) {
            let a = cloud(&raw.iter().map(|&(x, y, z)| [x, y, z]).collect::<Vec<_>>());
            let v = voxelize(&cloud(&cut.iter().map(|&(x, y, z)| [x, y, z]).collect::<Vec<_>>()), 0.5).unwrap();
            let once = cloud_minus(&a, &v);
            prop_assert_eq!(cloud_minus(&once, &v), once);
        }
    }
}
