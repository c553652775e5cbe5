//! Euclidean clustering of change points into objects.

use crate::cloud::PointCloud;
use crate::spatial::{KdTree, SpatialIndex};

struct DisjointSet {
    parent: Vec<usize>,
}

impl DisjointSet {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi] = lo;
        }
    }
}

/// Single-linkage components under `link_radius`, largest first (ties by
/// first point index); components smaller than `min_points` are dropped.
pub fn cluster_objects(
    points: &PointCloud,
    link_radius: f64,
    min_points: usize,
) -> Vec<PointCloud> {
    cluster_indices(points, link_radius, min_points)
        .iter()
        .map(|ix| points.select(ix))
        .collect()
}

pub fn cluster_indices(
    points: &PointCloud,
    link_radius: f64,
    min_points: usize,
) -> Vec<Vec<usize>> {
    let n = points.len();
    if n == 0 {
        return Vec::new();
    }
    let tree = KdTree::new(points.points());
    let mut ds = DisjointSet::new(n);
    for (i, p) in points.points().iter().enumerate() {
        for j in tree.within(p, link_radius) {
            if j > i {
                ds.union(i, j);
            }
        }
    }
    let mut groups: std::collections::BTreeMap<usize, Vec<usize>> =
        std::collections::BTreeMap::new();
    for i in 0..n {
        let r = ds.find(i);
        groups.entry(r).or_default().push(i);
    }
    let mut out: Vec<Vec<usize>> = groups
        .into_values()
        .filter(|g| g.len() >= min_points.max(1))
        .collect();
    out.sort_by(|a, b| b.len().cmp(&a.len()).then(a[0].cmp(&b[0])));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spatial::dist2;
    use nalgebra::Point3;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cube(rng: &mut ChaCha8Rng, c: [f64; 3], n: usize) -> Vec<Point3<f64>> {
        (0..n)
            .map(|_| {
                Point3::new(
                    c[0] + rng.random_range(0.0..1.0),
                    c[1] + rng.random_range(0.0..1.0),
                    c[2] + rng.random_range(0.0..1.0),
                )
            })
            .collect()
    }

    #[test]
    fn two_boxes_five_metres_apart() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut pts = cube(&mut rng, [0.0, 0.0, 0.0], 400);
        pts.extend(cube(&mut rng, [6.0, 0.0, 0.0], 300));
        let c = cluster_objects(&PointCloud::new(pts).unwrap(), 0.5, 10);
        assert_eq!(c.len(), 2);
        assert_eq!((c[0].len(), c[1].len()), (400, 300));
    }

    #[test]
    fn empty_input_has_no_clusters() {
        assert!(cluster_objects(&PointCloud::empty(), 0.5, 1).is_empty());
    }

    #[test]
    fn small_components_are_dropped() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut pts = cube(&mut rng, [0.0, 0.0, 0.0], 200);
        pts.push(Point3::new(20.0, 0.0, 0.0));
        assert_eq!(
            cluster_objects(&PointCloud::new(pts).unwrap(), 0.5, 5).len(),
            1
        );
    }

    #[test]
    fn matches_flood_fill_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pts: Vec<Point3<f64>> = (0..400)
            .map(|_| {
                Point3::new(
                    rng.random_range(0.0..10.0),
                    rng.random_range(0.0..10.0),
                    0.0,
                )
            })
            .collect();
        let r = 0.6;
        // oracle: breadth-first flood fill over the full distance matrix
        let mut label = vec![usize::MAX; pts.len()];
        let mut sizes = Vec::new();
        for s in 0..pts.len() {
            if label[s] != usize::MAX {
                continue;
            }
            let id = sizes.len();
            let mut queue = vec![s];
            label[s] = id;
            let mut size = 0;
            while let Some(i) = queue.pop() {
                size += 1;
                for j in 0..pts.len() {
                    if label[j] == usize::MAX && dist2(&pts[i], &pts[j]) <= r * r {
                        label[j] = id;
                        queue.push(j);
                    }
                }
            }
            sizes.push(size);
        }
        let got = cluster_indices(&PointCloud::new(pts).unwrap(), r, 1);
        let mut got_sizes: Vec<usize> = got.iter().map(Vec::len).collect();
        sizes.sort_unstable_by(|a, b| b.cmp(a));
        got_sizes.sort_unstable_by(|a, b| b.cmp(a));
        assert_eq!(got_sizes, sizes);
        for g in &got {
            assert!(g.iter().all(|&i| label[i] == label[g[0]]));
        }
    }
}
