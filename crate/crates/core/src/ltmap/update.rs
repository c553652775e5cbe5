//! Live and meta map maintenance from detected LD change.

use std::collections::{BTreeMap, BTreeSet};

use super::delta::{apply_delta, build_delta, DeltaMap, Direction};
use super::version::MapVersion;
use super::MapParams;
use crate::cloud::PointCloud;
use crate::error::{Error, Result};
use crate::ltremovert::LdResult;
use crate::voxel::VoxelKey;

/// World-voxel counts of sessions in which a voxel held weak PD points.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Votes {
    pub counts: BTreeMap<VoxelKey, u32>,
}

impl Votes {
    pub fn get(&self, key: &VoxelKey) -> u32 {
        self.counts.get(key).copied().unwrap_or(0)
    }

    /// One vote per voxel touched by `weak_pd`.
    pub fn with_session(&self, weak_pd: &PointCloud, resolution: f64) -> Votes {
        let keys: BTreeSet<VoxelKey> = weak_pd
            .points()
            .iter()
            .map(|p| VoxelKey::of(p, resolution))
            .collect();
        let mut counts = self.counts.clone();
        for k in keys {
            *counts.entry(k).or_insert(0) += 1;
        }
        Votes { counts }
    }

    pub fn to_text(&self) -> String {
        self.counts
            .iter()
            .map(|(k, c)| format!("{} {} {} {c}\n", k.0[0], k.0[1], k.0[2]))
            .collect()
    }

    pub fn parse(text: &str, origin: &str) -> Result<Votes> {
        let mut counts = BTreeMap::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let f: Vec<i64> = line
                .split_whitespace()
                .map(str::parse)
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| Error::parse(origin, n + 1, "expected four integers"))?;
            if f.len() != 4 || f[3] < 0 {
                return Err(Error::parse(origin, n + 1, "expected `i j k count`"));
            }
            counts.insert(VoxelKey([f[0], f[1], f[2]]), f[3] as u32);
        }
        Ok(Votes { counts })
    }
}

/// The up-to-date scene: removes strong ND and adds every PD point.
pub fn update_live_map(
    central: &MapVersion,
    ld: &LdResult,
    query_session: u32,
    params: &MapParams,
) -> Result<(MapVersion, DeltaMap)> {
    params.check()?;
    let delta = build_delta(
        central,
        query_session,
        &ld.nd_strong(),
        &ld.pd_raw,
        params.resolution,
        params.assoc_range,
    )?;
    let next = apply_delta(central, &delta, Direction::Forward)?;
    Ok((next, delta))
}

/// The persistent scene: removes strong ND, adds only strong PD, and drops
/// map points in voxels that held weak PD in at least `meta_votes` sessions.
pub fn update_meta_map(
    central: &MapVersion,
    ld: &LdResult,
    query_session: u32,
    votes: &Votes,
    params: &MapParams,
) -> Result<(MapVersion, DeltaMap, Votes)> {
    params.check()?;
    let votes = votes.with_session(&ld.pd_weak(), params.resolution);
    let mut nd = ld.nd_strong();
    let transient: BTreeSet<VoxelKey> = votes
        .counts
        .iter()
        .filter(|(_, &c)| c >= params.meta_votes)
        .map(|(&k, _)| k)
        .collect();
    if !transient.is_empty() {
        let map = central.merged();
        nd.append(&map.filter(|_, p| transient.contains(&VoxelKey::of(p, params.resolution))));
    }
    let delta = build_delta(
        central,
        query_session,
        &nd,
        &ld.pd_strong(),
        params.resolution,
        params.assoc_range,
    )?;
    let next = apply_delta(central, &delta, Direction::Forward)?;
    Ok((next, delta, votes))
}
