//! File-based stages and the end-to-end pipeline.
//!
//! ```text
//! <out>/aligned/session_<id>/      sessions with world-frame graphs
//! <out>/aligned/anchors_<id>.txt
//! <out>/removert/<a>_<b>/          LD between consecutive sessions
//! <out>/map/{live,meta}/           version stores
//! ```

use std::path::{Path, PathBuf};

use crate::cloud::PointCloud;
use crate::config::Config;
use crate::error::{Error, Result};
use crate::ltmap::{update_live_map, update_meta_map, MapParams, MapStore, MapVersion};
use crate::ltremovert::{
    detect_changes, read_clouds, read_session_ids, write_outputs, LdResult, RemovertParams,
};
use crate::ltslam::align::anchors_to_text;
use crate::ltslam::{align_sessions, SessionBundle, SlamParams};
use crate::settings::{self, keys, MAP_KEYS, REMOVERT_KEYS, SENSOR_KEYS, SLAM_KEYS};

/// A failed stage and its cause.
#[derive(Debug, thiserror::Error)]
#[error("stage {stage}: {source}")]
pub struct StageError {
    pub stage: &'static str,
    #[source]
    pub source: Error,
}

fn stage<T>(name: &'static str, r: Result<T>) -> std::result::Result<T, StageError> {
    r.map_err(|source| StageError {
        stage: name,
        source,
    })
}

/// A missing input directory is a configuration error.
pub fn require_dir(path: &Path, what: &str) -> Result<()> {
    if path.is_dir() {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "{what} directory not found: {}",
            path.display()
        )))
    }
}

fn remove_dir(path: &Path) -> Result<()> {
    if path.exists() {
        std::fs::remove_dir_all(path).map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

/// Runs `f` against a scratch directory that replaces `dest` on success and is
/// deleted on failure.
fn replace_dir<T>(dest: &Path, f: impl FnOnce(&Path) -> Result<T>) -> Result<T> {
    let name = dest.file_name().and_then(|s| s.to_str()).unwrap_or("out");
    let tmp = dest.with_file_name(format!(".{name}.partial"));
    remove_dir(&tmp)?;
    std::fs::create_dir_all(&tmp).map_err(|e| Error::io(&tmp, e))?;
    match f(&tmp) {
        Ok(v) => {
            remove_dir(dest)?;
            std::fs::rename(&tmp, dest).map_err(|e| Error::io(dest, e))?;
            Ok(v)
        }
        Err(e) => {
            let _ = std::fs::remove_dir_all(&tmp);
            Err(e)
        }
    }
}

/// Aligns `query` to `central` and writes both sessions with world-frame
/// graphs to `out/central` and `out/query`, plus `anchors.txt` and `loops.txt`.
pub fn run_ltslam(
    central: &Path,
    query: &Path,
    out: &Path,
    params: &SlamParams,
) -> Result<(SessionBundle, SessionBundle)> {
    require_dir(central, "central session")?;
    require_dir(query, "query session")?;
    let c = SessionBundle::load(central, &params.scan_context)?;
    let q = SessionBundle::load(query, &params.scan_context)?;
    align_and_write(&c, &q, out, params)
}

fn align_and_write(
    c: &SessionBundle,
    q: &SessionBundle,
    out: &Path,
    params: &SlamParams,
) -> Result<(SessionBundle, SessionBundle)> {
    let result = align_sessions(c, q, params)?;
    let a = &result.alignment;
    let cw = c.with_poses(a.central_world())?;
    let qw = q.with_poses(a.query_world())?;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    cw.save(out.join("central"))?;
    qw.save(out.join("query"))?;
    write_text(
        &out.join("anchors.txt"),
        &anchors_to_text(&a.anchor_central, &a.anchor_query),
    )?;
    let loops: String = result
        .loops()
        .iter()
        .map(|l| format!("{} {} {:.6}\n", l.central_idx, l.query_idx, l.fitness))
        .collect();
    write_text(&out.join("loops.txt"), &loops)?;
    Ok((cw, qw))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Change detection between two aligned session directories.
pub fn run_ltremovert(
    central: &Path,
    query: &Path,
    out: &Path,
    params: &RemovertParams,
    slam: &SlamParams,
) -> Result<LdResult> {
    require_dir(central, "central session")?;
    require_dir(query, "query session")?;
    let c = SessionBundle::load(central, &slam.scan_context)?;
    let q = SessionBundle::load(query, &slam.scan_context)?;
    let out_data = detect_changes(&c, &q, params)?;
    write_outputs(out, &out_data)?;
    Ok(out_data.ld)
}

/// Reads the `nd_*` and `pd_*` directories written by [`write_outputs`].
pub fn read_ld(dir: &Path) -> Result<LdResult> {
    let mut ld = LdResult::default();
    for (name, nd, strong) in [
        ("nd_strong", true, true),
        ("nd_weak", true, false),
        ("pd_strong", false, true),
        ("pd_weak", false, false),
    ] {
        for (k, c) in read_clouds(&dir.join(name))?.into_iter().enumerate() {
            let (raw, src, mask) = if nd {
                (&mut ld.nd_raw, &mut ld.nd_source, &mut ld.nd_strong_mask)
            } else {
                (&mut ld.pd_raw, &mut ld.pd_source, &mut ld.pd_strong_mask)
            };
            src.extend(std::iter::repeat_n(k, c.len()));
            mask.extend(std::iter::repeat_n(strong, c.len()));
            raw.append(&c);
        }
    }
    Ok(ld)
}

/// Live and meta version stores kept side by side under one directory.
pub struct MapStores {
    pub live: MapStore,
    pub meta: MapStore,
}

impl MapStores {
    pub fn create(dir: &Path, root: &MapVersion, params: &MapParams) -> Result<MapStores> {
        Ok(MapStores {
            live: MapStore::create(dir.join("live"), root, params.resolution)?,
            meta: MapStore::create(dir.join("meta"), root, params.resolution)?,
        })
    }

    pub fn open(dir: &Path) -> Result<MapStores> {
        require_dir(dir, "map store")?;
        Ok(MapStores {
            live: MapStore::open(dir.join("live"))?,
            meta: MapStore::open(dir.join("meta"))?,
        })
    }

    /// Commits the live and meta updates for `ld`; returns the new version ids.
    pub fn update(
        &mut self,
        ld: &LdResult,
        query_session: u32,
        params: &MapParams,
    ) -> Result<(u32, u32)> {
        let live = self.live.head_version()?;
        let (_, dl) = update_live_map(&live, ld, query_session, params)?;
        let meta = self.meta.head_version()?;
        let votes = self.meta.votes(self.meta.head());
        let (_, dm, votes) = update_meta_map(&meta, ld, query_session, &votes, params)?;
        Ok((
            self.live.commit(dl, None)?,
            self.meta.commit(dm, Some(&votes))?,
        ))
    }

    /// Moves both heads to `id`.
    pub fn set_head(&mut self, id: u32) -> Result<()> {
        self.live.set_head(id)?;
        self.meta.set_head(id)
    }

    pub fn store(&self, meta: bool) -> &MapStore {
        if meta {
            &self.meta
        } else {
            &self.live
        }
    }
}

/// Ingests an ltremovert output directory into the stores under `store`.
/// A missing store is created from `central` (the aligned central session)
/// and the cleaned central scans in `ld_dir`. The LD must have been computed
/// against the session the current heads represent.
pub fn run_ltmap_update(
    store: &Path,
    ld_dir: &Path,
    central: Option<&Path>,
    params: &MapParams,
) -> Result<(u32, u32)> {
    require_dir(ld_dir, "ltremovert output")?;
    let (cid, qid) = read_session_ids(ld_dir)?;
    let ld = read_ld(ld_dir)?;
    let mut stores = if store.join("live").is_dir() {
        MapStores::open(store)?
    } else {
        let central = central.ok_or_else(|| {
            Error::Config(format!(
                "map store {} does not exist; `central` is required to create it",
                store.display()
            ))
        })?;
        require_dir(central, "central session")?;
        let graph = crate::ltslam::PoseGraph::read(central.join("graph.txt"))?;
        let clean = read_clouds(&ld_dir.join("scans_clean").join("central"))?;
        MapStores::create(
            store,
            &MapVersion::root(cid, graph.nodes().to_vec(), clean)?,
            params,
        )?
    };
    for s in [&stores.live, &stores.meta] {
        let head = s.session_of(s.head()).unwrap_or(u32::MAX);
        if head != cid {
            return Err(Error::SessionMismatch {
                expected: head,
                found: cid,
            });
        }
    }
    stores.update(&ld, qid, params)
}

/// Root map of a session: its HD-cleaned keyframes at world poses.
pub fn root_version(session: &SessionBundle, clean: Vec<PointCloud>) -> Result<MapVersion> {
    MapVersion::root(session.id, session.poses().to_vec(), clean)
}

#[derive(Clone, Debug)]
pub struct PipelineConfig {
    pub central: PathBuf,
    pub queries: Vec<PathBuf>,
    pub out: PathBuf,
    pub slam: SlamParams,
    pub removert: RemovertParams,
    pub map: MapParams,
}

impl PipelineConfig {
    pub const KEYS: &'static [&'static str] = &["central", "query", "out"];

    pub fn from_config(cfg: &Config) -> Result<PipelineConfig> {
        let allowed = keys(
            &[SENSOR_KEYS, SLAM_KEYS, REMOVERT_KEYS, MAP_KEYS],
            &["threads"],
        );
        cfg.validate(&allowed, Self::KEYS)?;
        Ok(PipelineConfig {
            central: PathBuf::from(cfg.require_str("central")?),
            queries: cfg
                .get_list::<String>("query")?
                .unwrap_or_default()
                .into_iter()
                .map(PathBuf::from)
                .collect(),
            out: PathBuf::from(cfg.require_str("out")?),
            slam: settings::slam_params(cfg)?,
            removert: settings::removert_params(cfg)?,
            map: settings::map_params(cfg)?,
        })
    }
}

#[derive(Clone, Debug)]
pub struct PipelineSummary {
    pub sessions: Vec<u32>,
    pub live_head: u32,
    pub meta_head: u32,
}

/// ltslam → ltremovert → ltmap over the central session and each query in
/// turn. Every query is aligned to the central session; change detection runs
/// between consecutive sessions; the map stores start from the central session.
pub fn run_pipeline(cfg: &PipelineConfig) -> std::result::Result<PipelineSummary, StageError> {
    stage("input", require_dir(&cfg.central, "central session"))?;
    if cfg.queries.is_empty() {
        return Err(StageError {
            stage: "input",
            source: Error::Config("at least one query session is required".into()),
        });
    }
    for q in &cfg.queries {
        stage("input", require_dir(q, "query session"))?;
    }
    stage(
        "output",
        std::fs::create_dir_all(&cfg.out).map_err(|e| Error::io(&cfg.out, e)),
    )?;

    let sc = &cfg.slam.scan_context;
    let central = stage("ltslam", SessionBundle::load(&cfg.central, sc))?;
    let queries = stage(
        "ltslam",
        cfg.queries
            .iter()
            .map(|q| SessionBundle::load(q, sc))
            .collect::<Result<Vec<_>>>(),
    )?;
    let mut ids = vec![central.id];
    for q in &queries {
        if ids.contains(&q.id) {
            return Err(StageError {
                stage: "input",
                source: Error::Config(format!("session id {} appears twice", q.id)),
            });
        }
        ids.push(q.id);
    }

    let aligned = stage(
        "ltslam",
        replace_dir(&cfg.out.join("aligned"), |dir| {
            let mut world = Vec::new();
            for q in &queries {
                let scratch = dir.join(format!(".pair_{}", q.id));
                let (cw, qw) = align_and_write(&central, q, &scratch, &cfg.slam)?;
                if world.is_empty() {
                    cw.save(dir.join(format!("session_{}", cw.id)))?;
                    world.push(cw);
                }
                qw.save(dir.join(format!("session_{}", qw.id)))?;
                std::fs::rename(
                    scratch.join("anchors.txt"),
                    dir.join(format!("anchors_{}.txt", qw.id)),
                )
                .map_err(|e| Error::io(&scratch, e))?;
                remove_dir(&scratch)?;
                world.push(qw);
            }
            Ok(world)
        }),
    )?;

    let changes = stage(
        "ltremovert",
        replace_dir(&cfg.out.join("removert"), |dir| {
            let mut out = Vec::new();
            for pair in aligned.windows(2) {
                let r = detect_changes(&pair[0], &pair[1], &cfg.removert)?;
                write_outputs(dir.join(format!("{}_{}", pair[0].id, pair[1].id)), &r)?;
                out.push(r);
            }
            Ok(out)
        }),
    )?;

    let (live_head, meta_head) = stage(
        "ltmap",
        replace_dir(&cfg.out.join("map"), |dir| {
            let root = root_version(&aligned[0], changes[0].central_hd.static_scans.clone())?;
            let mut stores = MapStores::create(dir, &root, &cfg.map)?;
            let mut heads = (0, 0);
            for (r, q) in changes.iter().zip(&aligned[1..]) {
                heads = stores.update(&r.ld, q.id, &cfg.map)?;
            }
            Ok(heads)
        }),
    )?;

    Ok(PipelineSummary {
        sessions: ids,
        live_head,
        meta_head,
    })
}
