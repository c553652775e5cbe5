//! Storage and time accounting of delta maps against full snapshots.

use std::time::Instant;

use crate::error::{Error, Result};
use crate::ltmap::{apply_delta, chain_deltas, Direction, MapStore};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EfficiencyReport {
    /// Bytes of the deltas stored between the two versions.
    pub delta_bytes: u64,
    /// Bytes of the target map stored as a full snapshot.
    pub snapshot_bytes: u64,
    pub compose_secs: f64,
    pub recompute_secs: f64,
}

impl EfficiencyReport {
    pub fn storage_ratio(&self) -> f64 {
        self.delta_bytes as f64 / self.snapshot_bytes.max(1) as f64
    }

    pub fn speedup(&self) -> f64 {
        self.recompute_secs / self.compose_secs.max(f64::MIN_POSITIVE)
    }

    pub fn to_text(&self) -> String {
        format!(
            "delta_bytes {}\nsnapshot_bytes {}\nstorage_ratio {:.6}\ncompose_secs {:.6}\nrecompute_secs {:.6}\nspeedup {:.3}\n",
            self.delta_bytes,
            self.snapshot_bytes,
            self.storage_ratio(),
            self.compose_secs,
            self.recompute_secs,
            self.speedup()
        )
    }
}

pub fn timed<T>(f: impl FnOnce() -> Result<T>) -> Result<(T, f64)> {
    let t = Instant::now();
    let v = f()?;
    Ok((v, t.elapsed().as_secs_f64()))
}

/// Compares the deltas between versions `from` and its descendant `to` with a
/// snapshot of `to`. Compose time covers chaining the deltas and applying the
/// result to `from`; `recompute` is the alternative being compared against.
pub fn efficiency_report(
    store: &MapStore,
    from: u32,
    to: u32,
    recompute: impl FnOnce() -> Result<()>,
) -> Result<EfficiencyReport> {
    let path = store.graph().ancestry(to);
    let Some(steps) = path.iter().position(|&v| v == from) else {
        return Err(Error::Unreachable(from));
    };
    let ids: Vec<u32> = path[..steps].iter().rev().copied().collect();
    let delta_bytes = ids
        .iter()
        .map(|&v| store.stored_bytes(v).unwrap_or(0))
        .sum();
    let base = store.materialize(from)?;
    let target = store.materialize(to)?;
    let snapshot_bytes = target.clouds.iter().map(|c| c.to_text().len() as u64).sum();
    let (_, compose_secs) = timed(|| {
        let mut it = ids
            .iter()
            .map(|&v| store.graph().delta(v).expect("id on path"));
        let Some(first) = it.next() else {
            return Ok(base.clone());
        };
        let chained = it.try_fold(first.clone(), |acc, d| chain_deltas(&acc, d))?;
        apply_delta(&base, &chained, Direction::Forward)
    })?;
    let (_, recompute_secs) = timed(recompute)?;
    Ok(EfficiencyReport {
        delta_bytes,
        snapshot_bytes,
        compose_secs,
        recompute_secs,
    })
}

/// Coefficient of determination of the least-squares line through `(x, y)`.
pub fn linear_r2(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    if sxx == 0.0 || syy == 0.0 {
        return 1.0;
    }
    sxy * sxy / (sxx * syy)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cloud::PointCloud;
    use crate::geometry::Pose;
    use crate::ltmap::{DeltaMap, MapVersion};
    use nalgebra::Point3;

    #[test]
    fn r2_of_exact_and_noisy_lines() {
        assert!((linear_r2(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]) - 1.0).abs() < 1e-12);
        assert!(linear_r2(&[1.0, 2.0, 3.0, 4.0], &[1.0, 3.0, 1.0, 3.0]) < 0.5);
    }

    #[test]
    fn zero_change_costs_only_the_manifest() {
        let tmp = tempfile::tempdir().unwrap();
        let cloud = PointCloud::new(
            (0..500)
                .map(|i| Point3::new(i as f64 * 0.1, 0.0, 0.0))
                .collect(),
        )
        .unwrap();
        let root = MapVersion::root(1, vec![Pose::identity()], vec![cloud]).unwrap();
        let mut store = MapStore::create(tmp.path().join("s"), &root, 0.2).unwrap();
        let id = store
            .commit(
                DeltaMap::empty(1, 2, 0.2, root.poses.clone()).unwrap(),
                None,
            )
            .unwrap();
        let r = efficiency_report(&store, 0, id, || Ok(())).unwrap();
        assert_eq!(r.delta_bytes, 0);
        assert!(r.snapshot_bytes > 0);
        let manifest = std::fs::metadata(tmp.path().join("s/versions/0001/MANIFEST"))
            .unwrap()
            .len();
        assert!(manifest < 200);
        assert!(matches!(
            efficiency_report(&store, 5, id, || Ok(())),
            Err(Error::Unreachable(5))
        ));
    }
}
