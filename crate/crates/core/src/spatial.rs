//! Exact nearest-neighbour and radius queries.
//!
//! The kd-tree stores point indices only and splits at the median along the
//! axis of largest extent. All distance comparisons are done on squared
//! distances, with the same arithmetic as the brute-force scan, so radius
//! counts are bit-for-bit identical to an O(N) loop.

use nalgebra::Point3;

/// Neighbour queries over a fixed point set.
pub trait SpatialIndex {
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Index and distance of the closest point, or `None` if the set is empty.
    fn nearest(&self, q: &Point3<f64>) -> Option<(usize, f64)>;

    /// Number of points with `|p - q| <= r`.
    fn count_within(&self, q: &Point3<f64>, r: f64) -> usize;

    /// Indices of points with `|p - q| <= r`, ascending.
    fn within(&self, q: &Point3<f64>, r: f64) -> Vec<usize>;

    /// `count_within(q, r) >= k`, stopping as soon as `k` points are found.
    fn has_at_least(&self, q: &Point3<f64>, r: f64, k: usize) -> bool {
        self.count_within(q, r) >= k
    }
}

#[inline]
pub fn dist2(a: &Point3<f64>, b: &Point3<f64>) -> f64 {
    let dx = a.x - b.x;
    let dy = a.y - b.y;
    let dz = a.z - b.z;
    dx * dx + dy * dy + dz * dz
}

/// O(N) reference implementation.
pub struct BruteForce<'a> {
    points: &'a [Point3<f64>],
}

impl<'a> BruteForce<'a> {
    pub fn new(points: &'a [Point3<f64>]) -> Self {
        Self { points }
    }
}

impl SpatialIndex for BruteForce<'_> {
    fn len(&self) -> usize {
        self.points.len()
    }

    fn nearest(&self, q: &Point3<f64>) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64)> = None;
        for (i, p) in self.points.iter().enumerate() {
            let d = dist2(p, q);
            if best.is_none_or(|(_, b)| d < b) {
                best = Some((i, d));
            }
        }
        best.map(|(i, d)| (i, d.sqrt()))
    }

    fn count_within(&self, q: &Point3<f64>, r: f64) -> usize {
        let r2 = r * r;
        self.points.iter().filter(|p| dist2(p, q) <= r2).count()
    }

    fn within(&self, q: &Point3<f64>, r: f64) -> Vec<usize> {
        let r2 = r * r;
        (0..self.points.len())
            .filter(|&i| dist2(&self.points[i], q) <= r2)
            .collect()
    }
}

const LEAF_SIZE: usize = 16;

#[derive(Clone, Debug)]
enum Node {
    Leaf {
        start: usize,
        end: usize,
    },
    Split {
        axis: usize,
        value: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Clone, Debug)]
pub struct KdTree {
    points: Vec<Point3<f64>>,
    perm: Vec<usize>,
    nodes: Vec<Node>,
}

impl KdTree {
    pub fn new(points: &[Point3<f64>]) -> Self {
        let mut tree = KdTree {
            points: points.to_vec(),
            perm: (0..points.len()).collect(),
            nodes: Vec::new(),
        };
        if !points.is_empty() {
            tree.build(0, points.len());
        }
        tree
    }

    pub fn points(&self) -> &[Point3<f64>] {
        &self.points
    }

    fn build(&mut self, start: usize, end: usize) -> usize {
        let id = self.nodes.len();
        if end - start <= LEAF_SIZE {
            self.nodes.push(Node::Leaf { start, end });
            return id;
        }
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for &i in &self.perm[start..end] {
            for k in 0..3 {
                lo[k] = lo[k].min(self.points[i][k]);
                hi[k] = hi[k].max(self.points[i][k]);
            }
        }
        let axis = (0..3)
            .max_by(|&a, &b| (hi[a] - lo[a]).total_cmp(&(hi[b] - lo[b])))
            .unwrap();
        if hi[axis] - lo[axis] == 0.0 {
            // all points coincide
            self.nodes.push(Node::Leaf { start, end });
            return id;
        }
        let mid = start + (end - start) / 2;
        let points = &self.points;
        self.perm[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
            points[a][axis].total_cmp(&points[b][axis])
        });
        let value = self.points[self.perm[mid]][axis];
        self.nodes.push(Node::Leaf { start, end });
        let left = self.build(start, mid);
        let right = self.build(mid, end);
        self.nodes[id] = Node::Split {
            axis,
            value,
            left,
            right,
        };
        id
    }

    /// Visits every point whose squared distance to `q` is `<= r2`.
    /// The visitor returns `false` to stop early.
    fn visit_within(&self, q: &Point3<f64>, r2: f64, f: &mut impl FnMut(usize) -> bool) -> bool {
        if self.nodes.is_empty() {
            return true;
        }
        let mut stack = vec![0usize];
        while let Some(n) = stack.pop() {
            match self.nodes[n] {
                Node::Leaf { start, end } => {
                    for &i in &self.perm[start..end] {
                        if dist2(&self.points[i], q) <= r2 && !f(i) {
                            return false;
                        }
                    }
                }
                Node::Split {
                    axis,
                    value,
                    left,
                    right,
                } => {
                    // left holds coordinates <= value, right holds >= value
                    let d = q[axis] - value;
                    if d <= 0.0 || d * d <= r2 {
                        stack.push(left);
                    }
                    if d >= 0.0 || d * d <= r2 {
                        stack.push(right);
                    }
                }
            }
        }
        true
    }

    fn nearest_rec(&self, n: usize, q: &Point3<f64>, best: &mut (usize, f64)) {
        match self.nodes[n] {
            Node::Leaf { start, end } => {
                for &i in &self.perm[start..end] {
                    let d = dist2(&self.points[i], q);
                    if d < best.1 || (d == best.1 && i < best.0) {
                        *best = (i, d);
                    }
                }
            }
            Node::Split {
                axis,
                value,
                left,
                right,
            } => {
                let d = q[axis] - value;
                let (near, far) = if d <= 0.0 {
                    (left, right)
                } else {
                    (right, left)
                };
                self.nearest_rec(near, q, best);
                if d * d <= best.1 {
                    self.nearest_rec(far, q, best);
                }
            }
        }
    }
}

impl SpatialIndex for KdTree {
    fn len(&self) -> usize {
        self.points.len()
    }

    fn nearest(&self, q: &Point3<f64>) -> Option<(usize, f64)> {
        if self.points.is_empty() {
            return None;
        }
        let mut best = (usize::MAX, f64::INFINITY);
        self.nearest_rec(0, q, &mut best);
        Some((best.0, best.1.sqrt()))
    }

    fn count_within(&self, q: &Point3<f64>, r: f64) -> usize {
        let mut n = 0;
        self.visit_within(q, r * r, &mut |_| {
            n += 1;
            true
        });
        n
    }

    fn within(&self, q: &Point3<f64>, r: f64) -> Vec<usize> {
        let mut out = Vec::new();
        self.visit_within(q, r * r, &mut |i| {
            out.push(i);
            true
        });
        out.sort_unstable();
        out
    }

    fn has_at_least(&self, q: &Point3<f64>, r: f64, k: usize) -> bool {
        if k == 0 {
            return true;
        }
        let mut n = 0;
        !self.visit_within(q, r * r, &mut |_| {
            n += 1;
            n < k
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_points(n: usize, seed: u64) -> Vec<Point3<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                Point3::new(
                    rng.random_range(-10.0..10.0),
                    rng.random_range(-10.0..10.0),
                    rng.random_range(-2.0..2.0),
                )
            })
            .collect()
    }

    #[test]
    fn count_within_matches_linear_scan_exactly() {
        let pts = random_points(10_000, 1);
        let tree = KdTree::new(&pts);
        let brute = BruteForce::new(&pts);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..100 {
            let q = Point3::new(
                rng.random_range(-11.0..11.0),
                rng.random_range(-11.0..11.0),
                rng.random_range(-3.0..3.0),
            );
            let r = rng.random_range(0.05..2.0);
            assert_eq!(tree.count_within(&q, r), brute.count_within(&q, r));
            assert_eq!(tree.within(&q, r), brute.within(&q, r));
            let (_, dt) = tree.nearest(&q).unwrap();
            let (_, db) = brute.nearest(&q).unwrap();
            assert_eq!(dt, db);
        }
    }

    #[test]
    fn boundary_points_are_inclusive() {
        let pts = vec![Point3::new(1.0, 0.0, 0.0), Point3::new(2.0, 0.0, 0.0)];
        let tree = KdTree::new(&pts);
        assert_eq!(tree.count_within(&Point3::origin(), 1.0), 1);
        assert!(tree.has_at_least(&Point3::origin(), 2.0, 2));
        assert!(!tree.has_at_least(&Point3::origin(), 1.5, 2));
    }

    #[test]
    fn empty_and_duplicate_points() {
        let tree = KdTree::new(&[]);
        assert_eq!(tree.nearest(&Point3::origin()), None);
        assert_eq!(tree.count_within(&Point3::origin(), 10.0), 0);
        let dup = vec![Point3::new(0.5, 0.5, 0.5); 100];
        let tree = KdTree::new(&dup);
        assert_eq!(tree.count_within(&Point3::new(0.5, 0.5, 0.5), 0.0), 100);
    }

    proptest! {
        #[test]
        fn has_at_least_agrees_with_count(seed in 0u64..1000, k in 0usize..6, r in 0.1..3.0f64) {
            let pts = random_points(300, seed);
            let tree = KdTree::new(&pts);
            let q = pts[(seed % 300) as usize];
            prop_assert_eq!(tree.has_at_least(&q, r, k), tree.count_within(&q, r) >= k);
        }
    }
}
