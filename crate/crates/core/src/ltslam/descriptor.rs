//! Scan Context global descriptor and inter-session loop candidate search.

use std::f64::consts::TAU;

use rayon::prelude::*;

use crate::cloud::PointCloud;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScanContextParams {
    pub rings: usize,
    pub sectors: usize,
    pub max_radius: f64,
    /// Added to every z before binning.
    pub lidar_height: f64,
}

impl Default for ScanContextParams {
    fn default() -> Self {
        Self {
            rings: 20,
            sectors: 60,
            max_radius: 80.0,
            lidar_height: 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Descriptor {
    rings: usize,
    sectors: usize,
    /// Row-major `rings x sectors`.
    matrix: Vec<f64>,
    ring_key: Vec<f64>,
}

impl Descriptor {
    pub fn from_matrix(rings: usize, sectors: usize, matrix: Vec<f64>) -> Result<Descriptor> {
        if rings == 0 || sectors == 0 || matrix.len() != rings * sectors {
            return Err(Error::DimensionMismatch(format!(
                "{} values for a {rings}x{sectors} descriptor",
                matrix.len()
            )));
        }
        let ring_key = matrix
            .chunks(sectors)
            .map(|row| row.iter().sum::<f64>() / sectors as f64)
            .collect();
        Ok(Descriptor {
            rings,
            sectors,
            matrix,
            ring_key,
        })
    }

    pub fn rings(&self) -> usize {
        self.rings
    }

    pub fn sectors(&self) -> usize {
        self.sectors
    }

    pub fn get(&self, ring: usize, sector: usize) -> f64 {
        self.matrix[ring * self.sectors + sector]
    }

    pub fn matrix(&self) -> &[f64] {
        &self.matrix
    }

    pub fn ring_key(&self) -> &[f64] {
        &self.ring_key
    }

    /// Descriptor whose column `(s + k) mod S` equals column `s` of `self`.
    pub fn shifted(&self, k: usize) -> Descriptor {
        let s = self.sectors;
        let mut m = vec![0.0; self.matrix.len()];
        for r in 0..self.rings {
            for c in 0..s {
                m[r * s + (c + k) % s] = self.matrix[r * s + c];
            }
        }
        Descriptor {
            rings: self.rings,
            sectors: s,
            matrix: m,
            ring_key: self.ring_key.clone(),
        }
    }
}

pub fn make_descriptor(cloud: &PointCloud, params: &ScanContextParams) -> Result<Descriptor> {
    if cloud.is_empty() {
        return Err(Error::EmptyInput("descriptor of an empty cloud".into()));
    }
    if params.rings == 0 || params.sectors == 0 || params.max_radius <= 0.0 {
        return Err(Error::Config(format!("invalid descriptor size {params:?}")));
    }
    let (nr, ns) = (params.rings, params.sectors);
    let mut m = vec![f64::NEG_INFINITY; nr * ns];
    let ring_w = params.max_radius / nr as f64;
    let sector_w = TAU / ns as f64;
    for p in cloud.points() {
        let rho = p.x.hypot(p.y);
        if rho >= params.max_radius {
            continue;
        }
        let mut theta = p.y.atan2(p.x);
        if theta < 0.0 {
            theta += TAU;
        }
        let r = ((rho / ring_w) as usize).min(nr - 1);
        let s = ((theta / sector_w) as usize).min(ns - 1);
        let v = &mut m[r * ns + s];
        *v = v.max(p.z + params.lidar_height);
    }
    for v in &mut m {
        if *v == f64::NEG_INFINITY {
            *v = 0.0;
        }
    }
    Descriptor::from_matrix(nr, ns, m)
}

/// Column-wise cosine distance at shift `k`: column `c` of `a` against
/// column `(c + k) mod S` of `b`. Columns empty on either side are skipped,
/// negative similarities count as zero.
fn distance_at_shift(a: &Descriptor, b: &Descriptor, k: usize) -> f64 {
    let (nr, ns) = (a.rings, a.sectors);
    let mut sum = 0.0;
    let mut valid = 0usize;
    for c in 0..ns {
        let cb = (c + k) % ns;
        let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
        for r in 0..nr {
            let x = a.matrix[r * ns + c];
            let y = b.matrix[r * ns + cb];
            dot += x * y;
            na += x * x;
            nb += y * y;
        }
        if na > 0.0 && nb > 0.0 {
            sum += (dot / (na * nb).sqrt()).max(0.0);
            valid += 1;
        }
    }
    if valid == 0 {
        1.0
    } else {
        1.0 - sum / valid as f64
    }
}

/// Minimum column-cosine distance over all column shifts, and the shift that attains it.
pub fn descriptor_distance(a: &Descriptor, b: &Descriptor) -> Result<(f64, usize)> {
    if a.rings != b.rings || a.sectors != b.sectors {
        return Err(Error::DimensionMismatch(format!(
            "descriptors {}x{} and {}x{}",
            a.rings, a.sectors, b.rings, b.sectors
        )));
    }
    let mut best = (f64::INFINITY, 0);
    for k in 0..a.sectors {
        let d = distance_at_shift(a, b, k);
        if d < best.0 {
            best = (d, k);
        }
    }
    Ok((best.0.clamp(0.0, 1.0), best.1))
}

/// Yaw of the query frame relative to the central frame implied by a column shift.
pub fn shift_to_yaw(shift: usize, sectors: usize) -> f64 {
    crate::geometry::wrap_angle(-(shift as f64) * TAU / sectors as f64)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LoopCandidate {
    pub central_idx: usize,
    pub query_idx: usize,
    pub yaw_shift: usize,
    pub distance: f64,
}

/// For each query descriptor, the best central match among the `candidates`
/// nearest ring keys, kept when its distance is at most `threshold`.
pub fn detect_inter_session_loops(
    central: &[Descriptor],
    query: &[Descriptor],
    threshold: f64,
    candidates: usize,
) -> Result<Vec<LoopCandidate>> {
    if central.is_empty() || query.is_empty() {
        return Err(Error::EmptyInput(
            "loop detection needs descriptors on both sides".into(),
        ));
    }
    let found: Vec<Result<Option<LoopCandidate>>> = query
        .par_iter()
        .enumerate()
        .map(|(qi, q)| {
            let mut by_key: Vec<(f64, usize)> = central
                .iter()
                .enumerate()
                .map(|(ci, c)| (ring_key_distance(q, c), ci))
                .collect();
            by_key.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let mut best: Option<LoopCandidate> = None;
            for &(_, ci) in by_key.iter().take(candidates.max(1)) {
                let (d, k) = descriptor_distance(&central[ci], q)?;
                if best.is_none_or(|b| d < b.distance) {
                    best = Some(LoopCandidate {
                        central_idx: ci,
                        query_idx: qi,
                        yaw_shift: k,
                        distance: d,
                    });
                }
            }
            Ok(best.filter(|b| b.distance <= threshold))
        })
        .collect();
    let mut out = Vec::new();
    for f in found {
        if let Some(c) = f? {
            out.push(c);
        }
    }
    Ok(out)
}

fn ring_key_distance(a: &Descriptor, b: &Descriptor) -> f64 {
    a.ring_key
        .iter()
        .zip(&b.ring_key)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Point3;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn params() -> ScanContextParams {
        ScanContextParams::default()
    }

    fn random_cloud(n: usize, seed: u64) -> PointCloud {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        PointCloud::new(
            (0..n)
                .map(|_| {
                    Point3::new(
                        rng.random_range(-90.0..90.0),
                        rng.random_range(-90.0..90.0),
                        rng.random_range(-2.0..8.0),
                    )
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn single_point_fills_one_bin() {
        let c = PointCloud::new(vec![Point3::new(1.0, 0.0, 0.5)]).unwrap();
        let d = make_descriptor(&c, &params()).unwrap();
        let nonzero: Vec<f64> = d.matrix().iter().copied().filter(|v| *v != 0.0).collect();
        assert_eq!(nonzero, vec![0.5]);
        assert_eq!(d.get(0, 0), 0.5);
    }

    #[test]
    fn empty_cloud_is_an_error() {
        assert!(matches!(
            make_descriptor(&PointCloud::empty(), &params()),
            Err(Error::EmptyInput(_))
        ));
    }

    #[test]
    fn bins_match_brute_force_max() {
        let cloud = random_cloud(1000, 5);
        let p = params();
        let d = make_descriptor(&cloud, &p).unwrap();
        for r in 0..p.rings {
            for s in 0..p.sectors {
                // oracle: explicit bin-membership test per point
                let (r_lo, r_hi) = (r as f64 * 4.0, (r + 1) as f64 * 4.0);
                let (a_lo, a_hi) = (s as f64 * TAU / 60.0, (s + 1) as f64 * TAU / 60.0);
                let members: Vec<f64> = cloud
                    .points()
                    .iter()
                    .filter(|q| {
                        let rho = q.x.hypot(q.y);
                        let a = q.y.atan2(q.x).rem_euclid(TAU);
                        rho >= r_lo && rho < r_hi && a >= a_lo && a < a_hi
                    })
                    .map(|q| q.z)
                    .collect();
                let expected = members.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let expected = if members.is_empty() { 0.0 } else { expected };
                assert_eq!(d.get(r, s), expected, "bin ({r}, {s})");
            }
        }
    }

    #[test]
    fn rotation_by_one_sector_shifts_columns() {
        // points at sector centres so that rotation keeps them off bin edges
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let step = TAU / 60.0;
        let pts: Vec<(f64, f64, f64)> = (0..400)
            .map(|_| {
                let s = rng.random_range(0..60) as f64;
                (
                    rng.random_range(1.0..79.0),
                    (s + 0.5) * step,
                    rng.random_range(0.0..5.0),
                )
            })
            .collect();
        let make = |offset: f64| {
            PointCloud::new(
                pts.iter()
                    .map(|&(rho, a, z)| {
                        Point3::new(rho * (a + offset).cos(), rho * (a + offset).sin(), z)
                    })
                    .collect(),
            )
            .unwrap()
        };
        let a = make_descriptor(&make(0.0), &params()).unwrap();
        let b = make_descriptor(&make(step), &params()).unwrap();
        let sh = a.shifted(1);
        for (i, (x, y)) in b.matrix().iter().zip(sh.matrix()).enumerate() {
            assert_eq!(x, y, "cell {i}");
        }
        for (x, y) in b.ring_key().iter().zip(sh.ring_key()) {
            assert!((x - y).abs() < 1e-12);
        }
        assert_eq!(descriptor_distance(&a, &b).unwrap(), (0.0, 1));
    }

    #[test]
    fn self_and_shifted_distance() {
        let a = make_descriptor(&random_cloud(2000, 1), &params()).unwrap();
        assert_eq!(descriptor_distance(&a, &a).unwrap(), (0.0, 0));
        for k in [1, 17, 59] {
            let (d, s) = descriptor_distance(&a, &a.shifted(k)).unwrap();
            assert!(d.abs() < 1e-12);
            assert_eq!(s, k);
        }
    }

    #[test]
    fn distance_matches_exhaustive_shift_oracle() {
        let a = make_descriptor(&random_cloud(800, 2), &params()).unwrap();
        let b = make_descriptor(&random_cloud(800, 3), &params()).unwrap();
        // oracle: materialize every shifted copy and compare column by column
        let mut best = f64::INFINITY;
        for k in 0..60 {
            let bs = b.shifted(60 - k);
            let mut sims = Vec::new();
            for c in 0..60 {
                let ca: Vec<f64> = (0..20).map(|r| a.get(r, c)).collect();
                let cb: Vec<f64> = (0..20).map(|r| bs.get(r, c)).collect();
                let na = ca.iter().map(|x| x * x).sum::<f64>().sqrt();
                let nb = cb.iter().map(|x| x * x).sum::<f64>().sqrt();
                if na > 0.0 && nb > 0.0 {
                    let dot: f64 = ca.iter().zip(&cb).map(|(x, y)| x * y).sum();
                    sims.push((dot / (na * nb)).max(0.0));
                }
            }
            let d = 1.0 - sims.iter().sum::<f64>() / sims.len() as f64;
            best = best.min(d);
        }
        let (d, _) = descriptor_distance(&a, &b).unwrap();
        assert!((d - best).abs() < 1e-9, "{d} vs {best}");
        assert!((0.0..=1.0).contains(&d));
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let a = Descriptor::from_matrix(2, 3, vec![1.0; 6]).unwrap();
        let b = Descriptor::from_matrix(3, 2, vec![1.0; 6]).unwrap();
        assert!(descriptor_distance(&a, &b).is_err());
    }

    #[test]
    fn duplicated_session_matches_itself() {
        let ds: Vec<Descriptor> = (0..8)
            .map(|i| make_descriptor(&random_cloud(500, 100 + i), &params()).unwrap())
            .collect();
        let loops = detect_inter_session_loops(&ds, &ds, 0.2, 3).unwrap();
        assert_eq!(loops.len(), ds.len());
        for l in loops {
            assert_eq!(l.central_idx, l.query_idx);
            assert_eq!(l.distance, 0.0);
        }
    }

    #[test]
    fn shift_to_yaw_sign() {
        assert!((shift_to_yaw(1, 60) + TAU / 60.0).abs() < 1e-12);
        assert!(shift_to_yaw(0, 60).abs() < 1e-12);
    }
}
