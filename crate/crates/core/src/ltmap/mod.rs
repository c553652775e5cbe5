//! Delta-map versioning of the central map: per-keyframe change records,
//! composition, chaining and rollback, live and meta maps, and object parsing.

mod delta;
mod objects;
mod store;
mod update;
mod version;

pub use delta::{apply_delta, build_delta, chain_deltas, DeltaMap, Direction, KeyframeDelta};
pub use objects::{cluster_indices, cluster_objects};
pub use store::{Manifest, MapStore};
pub use update::{update_live_map, update_meta_map, Votes};
pub use version::{materialize, rollback, MapVersion, VersionGraph};

use crate::error::{Error, Result};
use crate::voxel::DEFAULT_RESOLUTION;

#[derive(Clone, Debug, PartialEq)]
pub struct MapParams {
    /// Voxel size of the set operations.
    pub resolution: f64,
    /// Keyframes within this distance of an ND point receive its removal.
    pub assoc_range: f64,
    /// Sessions of weak-PD evidence before a voxel leaves the meta map.
    pub meta_votes: u32,
    pub link_radius: f64,
    pub min_cluster_points: usize,
}

impl Default for MapParams {
    fn default() -> Self {
        Self {
            resolution: DEFAULT_RESOLUTION,
            assoc_range: 25.0,
            meta_votes: 2,
            link_radius: 0.5,
            min_cluster_points: 30,
        }
    }
}

impl MapParams {
    pub(crate) fn check(&self) -> Result<()> {
        if !(self.resolution > 0.0 && self.assoc_range > 0.0 && self.link_radius > 0.0) {
            return Err(Error::Config(
                "resolution, assoc_range and link_radius must be positive".into(),
            ));
        }
        if self.meta_votes == 0 {
            return Err(Error::Config("meta_votes must be at least 1".into()));
        }
        Ok(())
    }
}
