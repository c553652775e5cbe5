//! On-disk version store.
//!
//! ```text
//! <store>/HEAD                              current version id
//! <store>/versions/0000/MANIFEST            root: keyframe poses and clouds
//! <store>/versions/0000/poses.txt
//! <store>/versions/0000/keyframes/NNNNNN.xyz
//! <store>/versions/NNNN/MANIFEST            delta versions: changed keyframes only
//! <store>/versions/NNNN/nd_region/NNNNNN.vox
//! <store>/versions/NNNN/nd_points/NNNNNN.xyz
//! <store>/versions/NNNN/pd_points/NNNNNN.xyz
//! <store>/versions/NNNN/votes.txt           optional weak-PD votes
//! ```
//!
//! A version directory without a MANIFEST is ignored: the manifest, listing a
//! SHA-256 for every file, is written after the data, and HEAD after that.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use super::delta::{DeltaMap, KeyframeDelta};
use super::update::Votes;
use super::version::{materialize, MapVersion, VersionGraph};
use crate::cloud::PointCloud;
use crate::error::{Error, Result};
use crate::ltslam::graph::poses_to_text;
use crate::ltslam::{scan_file_name, PoseGraph};
use crate::voxel::{VoxelKey, VoxelSet};

fn version_dir_name(id: u32) -> String {
    format!("{id:04}")
}

fn vox_file_name(i: usize) -> String {
    format!("{i:06}.vox")
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn voxels_to_text(v: &VoxelSet) -> String {
    v.sorted_keys()
        .iter()
        .map(|k| format!("{} {} {}\n", k.0[0], k.0[1], k.0[2]))
        .collect()
}

fn parse_voxels(text: &str, resolution: f64, origin: &str) -> Result<VoxelSet> {
    let mut keys = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let f: Vec<i64> = line
            .split_whitespace()
            .map(str::parse)
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::parse(origin, n + 1, "expected three integers"))?;
        if f.len() != 3 {
            return Err(Error::parse(origin, n + 1, "expected three integers"));
        }
        keys.push(VoxelKey([f[0], f[1], f[2]]));
    }
    VoxelSet::from_keys(resolution, keys)
}

/// Files of one version, relative path → contents.
struct Staged {
    files: BTreeMap<String, Vec<u8>>,
}

impl Staged {
    fn new() -> Self {
        Self {
            files: BTreeMap::new(),
        }
    }

    fn add(&mut self, rel: String, text: String) {
        self.files.insert(rel, text.into_bytes());
    }

    fn bytes(&self) -> u64 {
        self.files.values().map(|b| b.len() as u64).sum()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Manifest {
    pub version: u32,
    pub session: u32,
    pub parent: Option<u32>,
    pub from_session: Option<u32>,
    pub resolution: f64,
    pub keyframes: Vec<usize>,
    /// Relative path → (sha256, size).
    pub files: BTreeMap<String, (String, u64)>,
}

impl Manifest {
    fn to_text(&self) -> String {
        let opt = |v: Option<u32>| v.map_or("none".to_string(), |x| x.to_string());
        let mut s = format!(
            "version: {}\nsession: {}\nparent: {}\ndelta: {}\nfrom_session: {}\nresolution: {}\nkeyframes: {}\n",
            self.version,
            self.session,
            opt(self.parent),
            opt(self.parent.map(|_| self.version)),
            opt(self.from_session),
            self.resolution,
            self.keyframes.iter().map(usize::to_string).collect::<Vec<_>>().join(" "),
        );
        for (path, (hash, size)) in &self.files {
            s.push_str(&format!("file: {hash} {size} {path}\n"));
        }
        s
    }

    fn parse(text: &str, origin: &str) -> Result<Manifest> {
        let mut fields: BTreeMap<&str, &str> = BTreeMap::new();
        let mut files = BTreeMap::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once(':')
                .ok_or_else(|| Error::parse(origin, n + 1, "expected `key: value`"))?;
            let v = v.trim();
            if k == "file" {
                let mut it = v.splitn(3, ' ');
                let (Some(hash), Some(size), Some(path)) = (it.next(), it.next(), it.next()) else {
                    return Err(Error::parse(
                        origin,
                        n + 1,
                        "expected `file: <sha256> <size> <path>`",
                    ));
                };
                let size = size
                    .parse()
                    .map_err(|_| Error::parse(origin, n + 1, "bad file size"))?;
                files.insert(path.to_string(), (hash.to_string(), size));
            } else if fields.insert(k, v).is_some() {
                return Err(Error::parse(origin, n + 1, format!("duplicate key `{k}`")));
            }
        }
        let get = |k: &str| {
            fields
                .get(k)
                .copied()
                .ok_or_else(|| Error::parse(origin, 0, format!("missing `{k}`")))
        };
        let num = |k: &str| -> Result<u32> {
            get(k)?
                .parse()
                .map_err(|_| Error::parse(origin, 0, format!("bad `{k}`")))
        };
        let opt = |k: &str| -> Result<Option<u32>> {
            match get(k)? {
                "none" => Ok(None),
                v => v
                    .parse()
                    .map(Some)
                    .map_err(|_| Error::parse(origin, 0, format!("bad `{k}`"))),
            }
        };
        let keyframes = get("keyframes")?
            .split_whitespace()
            .map(|s| {
                s.parse()
                    .map_err(|_| Error::parse(origin, 0, "bad keyframe list"))
            })
            .collect::<Result<Vec<usize>>>()?;
        Ok(Manifest {
            version: num("version")?,
            session: num("session")?,
            parent: opt("parent")?,
            from_session: opt("from_session")?,
            resolution: get("resolution")?
                .parse()
                .map_err(|_| Error::parse(origin, 0, "bad `resolution`"))?,
            keyframes,
            files,
        })
    }
}

/// A root map plus every delta derived from it.
#[derive(Clone, Debug)]
pub struct MapStore {
    dir: PathBuf,
    root: MapVersion,
    graph: VersionGraph,
    votes: BTreeMap<u32, Votes>,
    bytes: BTreeMap<u32, u64>,
    head: u32,
}

impl MapStore {
    /// Creates a store holding `root` as version 0.
    pub fn create(dir: impl AsRef<Path>, root: &MapVersion, resolution: f64) -> Result<MapStore> {
        let dir = dir.as_ref().to_path_buf();
        if dir.join("HEAD").exists() {
            return Err(Error::Invalid(format!(
                "{} already holds a map store",
                dir.display()
            )));
        }
        let mut staged = Staged::new();
        staged.add("poses.txt".into(), poses_to_text(&root.poses));
        for (i, c) in root.clouds.iter().enumerate() {
            staged.add(format!("keyframes/{}", scan_file_name(i)), c.to_text());
        }
        let manifest = Manifest {
            version: 0,
            session: root.session,
            parent: None,
            from_session: None,
            resolution,
            keyframes: (0..root.len()).collect(),
            files: BTreeMap::new(),
        };
        let bytes = staged.bytes();
        commit_files(&dir, manifest, staged)?;
        write_bytes(&dir.join("HEAD"), b"0\n")?;
        let mut root = root.clone();
        root.id = 0;
        root.parent = None;
        root.delta = None;
        Ok(MapStore {
            dir,
            root,
            graph: VersionGraph::default(),
            votes: BTreeMap::new(),
            bytes: BTreeMap::from([(0, bytes)]),
            head: 0,
        })
    }

    /// Loads every committed version, verifying checksums.
    pub fn open(dir: impl AsRef<Path>) -> Result<MapStore> {
        let dir = dir.as_ref().to_path_buf();
        let head_path = dir.join("HEAD");
        let head: u32 = read_text(&head_path)?
            .trim()
            .parse()
            .map_err(|_| Error::parse(head_path.display(), 1, "expected a version id"))?;
        let versions = dir.join("versions");
        let mut ids: Vec<u32> = std::fs::read_dir(&versions)
            .map_err(|e| Error::io(&versions, e))?
            .filter_map(|e| e.ok())
            .filter(|e| e.path().join("MANIFEST").exists())
            .filter_map(|e| e.file_name().to_str().and_then(|s| s.parse().ok()))
            .collect();
        ids.sort_unstable();
        if ids.first() != Some(&0) {
            return Err(Error::Invalid(format!(
                "{}: no root version",
                dir.display()
            )));
        }
        let mut store: Option<MapStore> = None;
        for id in ids {
            let vdir = versions.join(version_dir_name(id));
            let (manifest, files) = read_verified(&vdir)?;
            let bytes = files.values().map(|b| b.len() as u64).sum();
            let text = |rel: &str| -> Result<&str> {
                let b = files.get(rel).ok_or_else(|| {
                    Error::Invalid(format!("{}: `{rel}` not in manifest", vdir.display()))
                })?;
                std::str::from_utf8(b)
                    .map_err(|_| Error::Invalid(format!("{}: `{rel}` is not text", vdir.display())))
            };
            let origin = |rel: &str| vdir.join(rel).display().to_string();
            match manifest.parent {
                None => {
                    let poses = PoseGraph::parse(text("poses.txt")?, &origin("poses.txt"))?
                        .nodes()
                        .to_vec();
                    let clouds = (0..poses.len())
                        .map(|i| {
                            let rel = format!("keyframes/{}", scan_file_name(i));
                            PointCloud::parse(text(&rel)?, &origin(&rel))
                        })
                        .collect::<Result<Vec<_>>>()?;
                    let root = MapVersion::root(manifest.session, poses, clouds)?;
                    store = Some(MapStore {
                        dir: dir.clone(),
                        root,
                        graph: VersionGraph::default(),
                        votes: BTreeMap::new(),
                        bytes: BTreeMap::from([(0, bytes)]),
                        head,
                    });
                }
                Some(parent) => {
                    let st = store.as_mut().ok_or_else(|| {
                        Error::Invalid(format!("{}: no root version", dir.display()))
                    })?;
                    let from = manifest.from_session.unwrap_or(0);
                    let mut delta = DeltaMap::empty(
                        from,
                        manifest.session,
                        manifest.resolution,
                        st.root.poses.clone(),
                    )?;
                    for &i in &manifest.keyframes {
                        let cloud = |sub: &str| -> Result<PointCloud> {
                            let rel = format!("{sub}/{}", scan_file_name(i));
                            PointCloud::parse(text(&rel)?, &origin(&rel))
                        };
                        let rel = format!("nd_region/{}", vox_file_name(i));
                        delta.keyframes.insert(
                            i,
                            KeyframeDelta {
                                nd_region: parse_voxels(
                                    text(&rel)?,
                                    manifest.resolution,
                                    &origin(&rel),
                                )?,
                                nd_points: cloud("nd_points")?,
                                pd_points: cloud("pd_points")?,
                            },
                        );
                    }
                    if files.contains_key("votes.txt") {
                        st.votes
                            .insert(id, Votes::parse(text("votes.txt")?, &origin("votes.txt"))?);
                    }
                    st.graph.links.insert(id, (parent, manifest.session, delta));
                    st.bytes.insert(id, bytes);
                }
            }
        }
        let store = store.expect("root checked above");
        if store.head != 0 && !store.graph.links.contains_key(&store.head) {
            return Err(Error::Invalid(format!(
                "HEAD names missing version {}",
                store.head
            )));
        }
        Ok(store)
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn head(&self) -> u32 {
        self.head
    }

    pub fn root(&self) -> &MapVersion {
        &self.root
    }

    pub fn graph(&self) -> &VersionGraph {
        &self.graph
    }

    pub fn versions(&self) -> Vec<u32> {
        std::iter::once(0)
            .chain(self.graph.links.keys().copied())
            .collect()
    }

    pub fn contains(&self, id: u32) -> bool {
        id == 0 || self.graph.links.contains_key(&id)
    }

    pub fn session_of(&self, id: u32) -> Option<u32> {
        if id == 0 {
            Some(self.root.session)
        } else {
            self.graph.links.get(&id).map(|(_, s, _)| *s)
        }
    }

    pub fn materialize(&self, id: u32) -> Result<MapVersion> {
        if !self.contains(id) {
            return Err(Error::Unreachable(id));
        }
        materialize(&self.root, id, &self.graph)
    }

    pub fn head_version(&self) -> Result<MapVersion> {
        self.materialize(self.head)
    }

    /// Votes in effect at `id`: those of the nearest ancestor that stored any.
    pub fn votes(&self, id: u32) -> Votes {
        self.graph
            .ancestry(id)
            .iter()
            .find_map(|v| self.votes.get(v).cloned())
            .unwrap_or_default()
    }

    /// Bytes on disk of version `id` (full snapshot for the root, delta otherwise).
    pub fn stored_bytes(&self, id: u32) -> Option<u64> {
        self.bytes.get(&id).copied()
    }

    /// Writes `delta` as a child of the head and moves the head to it.
    pub fn commit(&mut self, delta: DeltaMap, votes: Option<&Votes>) -> Result<u32> {
        let parent = self.head;
        let parent_session = self.session_of(parent).expect("head exists");
        if delta.from_session != parent_session {
            return Err(Error::SessionMismatch {
                expected: parent_session,
                found: delta.from_session,
            });
        }
        let id = self.graph.next_id();
        let mut staged = Staged::new();
        for (&i, kd) in &delta.keyframes {
            staged.add(
                format!("nd_region/{}", vox_file_name(i)),
                voxels_to_text(&kd.nd_region),
            );
            staged.add(
                format!("nd_points/{}", scan_file_name(i)),
                kd.nd_points.to_text(),
            );
            staged.add(
                format!("pd_points/{}", scan_file_name(i)),
                kd.pd_points.to_text(),
            );
        }
        if let Some(v) = votes {
            staged.add("votes.txt".into(), v.to_text());
            self.votes.insert(id, v.clone());
        }
        let manifest = Manifest {
            version: id,
            session: delta.to_session,
            parent: Some(parent),
            from_session: Some(delta.from_session),
            resolution: delta.resolution,
            keyframes: delta.keyframes.keys().copied().collect(),
            files: BTreeMap::new(),
        };
        self.bytes.insert(id, staged.bytes());
        commit_files(&self.dir, manifest, staged)?;
        self.graph
            .links
            .insert(id, (parent, delta.to_session, delta));
        self.set_head(id)?;
        Ok(id)
    }

    pub fn set_head(&mut self, id: u32) -> Result<()> {
        if !self.contains(id) {
            return Err(Error::Unreachable(id));
        }
        write_bytes(&self.dir.join("HEAD"), format!("{id}\n").as_bytes())?;
        self.head = id;
        Ok(())
    }
}

fn commit_files(dir: &Path, mut manifest: Manifest, staged: Staged) -> Result<()> {
    let vdir = dir
        .join("versions")
        .join(version_dir_name(manifest.version));
    for (rel, bytes) in &staged.files {
        write_bytes(&vdir.join(rel), bytes)?;
        manifest
            .files
            .insert(rel.clone(), (sha256_hex(bytes), bytes.len() as u64));
    }
    write_bytes(&vdir.join("MANIFEST"), manifest.to_text().as_bytes())
}

fn read_verified(vdir: &Path) -> Result<(Manifest, BTreeMap<String, Vec<u8>>)> {
    let mpath = vdir.join("MANIFEST");
    let manifest = Manifest::parse(&read_text(&mpath)?, &mpath.display().to_string())?;
    let mut files = BTreeMap::new();
    for (rel, (hash, _)) in &manifest.files {
        let p = vdir.join(rel);
        let bytes = std::fs::read(&p).map_err(|e| Error::io(&p, e))?;
        if sha256_hex(&bytes) != *hash {
            return Err(Error::Invalid(format!(
                "{}: checksum mismatch",
                p.display()
            )));
        }
        files.insert(rel.clone(), bytes);
    }
    Ok((manifest, files))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Pose;
    use crate::ltmap::delta::{apply_delta, build_delta, Direction};
    use crate::ltmap::version::rollback;
    use nalgebra::Point3;

    fn root() -> MapVersion {
        let grid = |x0: f64, z: f64| -> PointCloud {
            let mut v = Vec::new();
            for i in 0..30 {
                for j in 0..30 {
                    v.push(Point3::new(x0 + i as f64 * 0.1, j as f64 * 0.1, z));
                }
            }
            PointCloud::new(v).unwrap()
        };
        MapVersion::root(
            1,
            vec![Pose::identity(), Pose::from_xyz_yaw(5.0, 0.0, 0.0, 1.0)],
            vec![grid(0.0, 0.0), grid(1.0, 0.5)],
        )
        .unwrap()
    }

    #[test]
    fn commit_reopen_and_roll_back() {
        let tmp = tempfile::tempdir().unwrap();
        let dir = tmp.path().join("store");
        let r = root();
        let mut store = MapStore::create(&dir, &r, 0.2).unwrap();
        let nd = r.merged().filter(|_, p| p.x < 1.0);
        let d1 = build_delta(&r, 2, &nd, &PointCloud::empty(), 0.2, 30.0).unwrap();
        let v1 = apply_delta(&r, &d1, Direction::Forward).unwrap();
        let id1 = store.commit(d1, None).unwrap();
        let pd = PointCloud::new(vec![
            Point3::new(0.5, 0.5, 3.0),
            Point3::new(0.55, 0.5, 3.0),
        ])
        .unwrap();
        let d2 = build_delta(&v1, 3, &PointCloud::empty(), &pd, 0.2, 30.0).unwrap();
        let votes = Votes::default().with_session(&pd, 0.2);
        let id2 = store.commit(d2, Some(&votes)).unwrap();
        assert_eq!((id1, id2, store.head()), (1, 2, 2));

        let reopened = MapStore::open(&dir).unwrap();
        assert_eq!(reopened.head(), 2);
        assert_eq!(reopened.versions(), vec![0, 1, 2]);
        assert_eq!(reopened.votes(2), votes);
        assert_eq!(reopened.votes(1), Votes::default());
        let head = reopened.head_version().unwrap();
        assert_eq!(head.session, 3);
        assert_eq!(head.point_count(), r.point_count() - nd.len() + 2);
        let back = rollback(&head, 0, reopened.graph()).unwrap();
        assert!(back.keyframe_iou(&r, 0.2).unwrap() >= 0.98);
        assert!(matches!(
            MapStore::create(&dir, &r, 0.2),
            Err(Error::Invalid(_))
        ));
    }

    #[test]
    fn corrupted_file_fails_the_checksum() {
        let tmp = tempfile::tempdir().unwrap();
        let dir = tmp.path().join("store");
        MapStore::create(&dir, &root(), 0.2).unwrap();
        let f = dir.join("versions/0000/keyframes").join(scan_file_name(1));
        std::fs::write(&f, "0 0 0\n").unwrap();
        let err = MapStore::open(&dir).unwrap_err().to_string();
        assert!(err.contains("checksum"), "{err}");
    }

    #[test]
    fn version_without_manifest_is_ignored() {
        let tmp = tempfile::tempdir().unwrap();
        let dir = tmp.path().join("store");
        MapStore::create(&dir, &root(), 0.2).unwrap();
        std::fs::create_dir_all(dir.join("versions/0001/pd_points")).unwrap();
        assert_eq!(MapStore::open(&dir).unwrap().versions(), vec![0]);
    }

    #[test]
    fn manifest_round_trips() {
        let m = Manifest {
            version: 3,
            session: 4,
            parent: Some(2),
            from_session: Some(2),
            resolution: 0.2,
            keyframes: vec![1, 5],
            files: BTreeMap::from([("pd_points/000001.xyz".to_string(), ("ab".repeat(32), 10))]),
        };
        assert_eq!(Manifest::parse(&m.to_text(), "mem").unwrap(), m);
    }
}
