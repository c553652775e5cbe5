//! A mapping session on disk and in memory.
//!
//! ```text
//! <dir>/graph.txt          pose graph, session-local frame
//! <dir>/scans/000000.xyz   keyframe clouds, sensor frame
//! <dir>/session.txt        optional `session_id:` and `keyframe_spacing:`
//! <dir>/gt_poses.txt       optional ground-truth world poses (vertex records)
//! <dir>/labels/000000.txt  optional `class object_id` per scan point
//! ```

use std::path::Path;

use rayon::prelude::*;

use super::descriptor::{make_descriptor, Descriptor, ScanContextParams};
use super::graph::{poses_to_text, read_poses, PoseGraph};
use crate::cloud::PointCloud;
use crate::config::Config;
use crate::error::{Error, Result};
use crate::geometry::Pose;

#[derive(Clone, Debug)]
pub struct Keyframe {
    pub cloud: PointCloud,
    pub descriptor: Descriptor,
    /// Simulator object id per point (0 for unnamed geometry).
    pub object_ids: Option<Vec<u32>>,
}

#[derive(Clone, Debug)]
pub struct SessionBundle {
    pub id: u32,
    pub graph: PoseGraph,
    pub keyframes: Vec<Keyframe>,
    pub keyframe_spacing: f64,
    pub gt_poses: Option<Vec<Pose>>,
}

pub fn scan_file_name(i: usize) -> String {
    format!("{i:06}.xyz")
}

pub fn label_file_name(i: usize) -> String {
    format!("{i:06}.txt")
}

impl SessionBundle {
    pub fn new(
        id: u32,
        graph: PoseGraph,
        clouds: Vec<PointCloud>,
        keyframe_spacing: f64,
        params: &ScanContextParams,
    ) -> Result<SessionBundle> {
        if graph.is_empty() {
            return Err(Error::EmptyInput(format!("session {id} has no keyframes")));
        }
        if clouds.len() != graph.len() {
            return Err(Error::DimensionMismatch(format!(
                "session {id}: {} scans for {} graph nodes",
                clouds.len(),
                graph.len()
            )));
        }
        let keyframes = clouds
            .into_par_iter()
            .map(|cloud| {
                let descriptor = make_descriptor(&cloud, params)?;
                Ok(Keyframe {
                    cloud,
                    descriptor,
                    object_ids: None,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(SessionBundle {
            id,
            graph,
            keyframes,
            keyframe_spacing,
            gt_poses: None,
        })
    }

    pub fn len(&self) -> usize {
        self.keyframes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keyframes.is_empty()
    }

    pub fn poses(&self) -> &[Pose] {
        self.graph.nodes()
    }

    pub fn clouds(&self) -> Vec<&PointCloud> {
        self.keyframes.iter().map(|k| &k.cloud).collect()
    }

    pub fn descriptors(&self) -> Vec<Descriptor> {
        self.keyframes
            .iter()
            .map(|k| k.descriptor.clone())
            .collect()
    }

    /// All keyframe clouds merged in the graph frame.
    pub fn merged_map(&self) -> PointCloud {
        merge(self.keyframes.iter().map(|k| &k.cloud), self.poses())
    }

    /// Same session with its node values replaced, e.g. by world-frame poses.
    pub fn with_poses(&self, graph: PoseGraph) -> Result<SessionBundle> {
        if graph.len() != self.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} poses for a session of {} keyframes",
                graph.len(),
                self.len()
            )));
        }
        Ok(SessionBundle {
            graph,
            ..self.clone()
        })
    }

    /// Indices `i` whose spacing to `i + 1` deviates more than `tol` (relative) from the nominal spacing.
    pub fn spacing_violations(&self, poses: &[Pose], tol: f64) -> Vec<usize> {
        poses
            .windows(2)
            .enumerate()
            .filter(|(_, w)| {
                let d = (w[1].translation() - w[0].translation()).norm();
                (d - self.keyframe_spacing).abs() > tol * self.keyframe_spacing
            })
            .map(|(i, _)| i)
            .collect()
    }

    pub fn load(dir: impl AsRef<Path>, params: &ScanContextParams) -> Result<SessionBundle> {
        let dir = dir.as_ref();
        if !dir.is_dir() {
            return Err(Error::io(
                dir,
                std::io::Error::new(std::io::ErrorKind::NotFound, "session directory not found"),
            ));
        }
        let graph = PoseGraph::read(dir.join("graph.txt"))?;
        let meta_path = dir.join("session.txt");
        let (mut id, mut spacing) = (0u32, None);
        if meta_path.exists() {
            let meta = Config::read(&meta_path)?;
            meta.validate(&["session_id", "keyframe_spacing"], &[])?;
            id = meta.get_or("session_id", 0u32)?;
            spacing = meta.get::<f64>("keyframe_spacing")?;
        }
        let scans = dir.join("scans");
        let label_dir = dir.join("labels");
        let clouds: Vec<(PointCloud, Option<Vec<u32>>)> = (0..graph.len())
            .into_par_iter()
            .map(|i| {
                let cloud = PointCloud::read(scans.join(scan_file_name(i)))?;
                let label_path = label_dir.join(label_file_name(i));
                if label_path.exists() {
                    let (classes, ids) = read_labels(&label_path, cloud.len())?;
                    let cloud = PointCloud::with_labels(cloud.into_points(), classes)?;
                    Ok((cloud, Some(ids)))
                } else {
                    Ok((cloud, None))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        let extra = std::fs::read_dir(&scans)
            .map_err(|e| Error::io(&scans, e))?
            .filter_map(|e| e.ok())
            .filter(|e| e.path().extension().is_some_and(|x| x == "xyz"))
            .count();
        if extra != graph.len() {
            return Err(Error::DimensionMismatch(format!(
                "{}: {extra} scan files for {} graph nodes",
                dir.display(),
                graph.len()
            )));
        }
        let spacing = spacing.unwrap_or_else(|| median_spacing(graph.nodes()));
        let (clouds, ids): (Vec<PointCloud>, Vec<Option<Vec<u32>>>) = clouds.into_iter().unzip();
        let mut bundle = SessionBundle::new(id, graph, clouds, spacing, params)?;
        for (k, ids) in bundle.keyframes.iter_mut().zip(ids) {
            k.object_ids = ids;
        }
        let gt = dir.join("gt_poses.txt");
        if gt.exists() {
            let poses = read_poses(&gt)?;
            if poses.len() != bundle.len() {
                return Err(Error::DimensionMismatch(format!(
                    "{}: {} ground-truth poses for {} keyframes",
                    gt.display(),
                    poses.len(),
                    bundle.len()
                )));
            }
            bundle.gt_poses = Some(poses);
        }
        Ok(bundle)
    }

    /// Writes the session layout. Class labels and object ids go to `labels/`
    /// when every keyframe has them.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        let scans = dir.join("scans");
        std::fs::create_dir_all(&scans).map_err(|e| Error::io(&scans, e))?;
        self.graph.write(dir.join("graph.txt"))?;
        let meta = format!(
            "session_id: {}\nkeyframe_spacing: {}\n",
            self.id, self.keyframe_spacing
        );
        write_file(&dir.join("session.txt"), &meta)?;
        if let Some(gt) = &self.gt_poses {
            write_file(&dir.join("gt_poses.txt"), &poses_to_text(gt))?;
        }
        let with_labels = self
            .keyframes
            .iter()
            .all(|k| k.cloud.labels().is_some() && k.object_ids.is_some());
        if with_labels {
            std::fs::create_dir_all(dir.join("labels"))
                .map_err(|e| Error::io(dir.join("labels"), e))?;
        }
        self.keyframes
            .par_iter()
            .enumerate()
            .try_for_each(|(i, k)| -> Result<()> {
                k.cloud
                    .clone()
                    .drop_labels()
                    .write(scans.join(scan_file_name(i)))?;
                if with_labels {
                    let classes = k.cloud.labels().unwrap_or_default();
                    let ids = k.object_ids.as_deref().unwrap_or_default();
                    let text: String = classes
                        .iter()
                        .zip(ids)
                        .map(|(c, o)| format!("{c} {o}\n"))
                        .collect();
                    write_file(&dir.join("labels").join(label_file_name(i)), &text)?;
                }
                Ok(())
            })
    }
}

pub(crate) fn write_file(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Merges local clouds into one cloud using per-cloud poses.
pub fn merge<'a>(clouds: impl IntoIterator<Item = &'a PointCloud>, poses: &[Pose]) -> PointCloud {
    let moved: Vec<PointCloud> = clouds
        .into_iter()
        .zip(poses)
        .map(|(c, p)| c.transformed(p))
        .collect();
    PointCloud::concat(moved.iter())
}

fn median_spacing(poses: &[Pose]) -> f64 {
    let mut d: Vec<f64> = poses
        .windows(2)
        .map(|w| (w[1].translation() - w[0].translation()).norm())
        .collect();
    if d.is_empty() {
        return 0.0;
    }
    d.sort_by(f64::total_cmp);
    d[d.len() / 2]
}

fn read_labels(path: &Path, expected: usize) -> Result<(Vec<u8>, Vec<u32>)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let origin = path.display().to_string();
    let mut classes = Vec::with_capacity(expected);
    let mut ids = Vec::with_capacity(expected);
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut it = line.split_whitespace();
        let (Some(c), Some(o), None) = (it.next(), it.next(), it.next()) else {
            return Err(Error::parse(&origin, n + 1, "expected `class object_id`"));
        };
        classes.push(
            c.parse::<u8>()
                .map_err(|_| Error::parse(&origin, n + 1, "bad class"))?,
        );
        ids.push(
            o.parse::<u32>()
                .map_err(|_| Error::parse(&origin, n + 1, "bad object id"))?,
        );
    }
    if classes.len() != expected {
        return Err(Error::DimensionMismatch(format!(
            "{origin}: {} labels for {expected} points",
            classes.len()
        )));
    }
    Ok((classes, ids))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Vec6;
    use nalgebra::Point3;

    fn cloud(shift: f64) -> PointCloud {
        PointCloud::with_labels(
            (0..20)
                .map(|i| Point3::new(i as f64 + shift, 1.0, 0.5))
                .collect(),
            vec![0; 20],
        )
        .unwrap()
    }

    #[test]
    fn save_load_round_trip() {
        let poses: Vec<Pose> = (0..3)
            .map(|i| Pose::from_xyz_yaw(i as f64, 0.0, 1.8, 0.0))
            .collect();
        let graph = PoseGraph::from_chain(poses.clone(), &Vec6::from_element(0.1));
        let mut s = SessionBundle::new(
            7,
            graph,
            vec![cloud(0.0), cloud(0.5), cloud(1.0)],
            1.0,
            &ScanContextParams::default(),
        )
        .unwrap();
        for k in &mut s.keyframes {
            k.object_ids = Some(vec![3; 20]);
        }
        s.gt_poses = Some(poses);
        let dir = tempfile::tempdir().unwrap();
        s.save(dir.path()).unwrap();
        let back = SessionBundle::load(dir.path(), &ScanContextParams::default()).unwrap();
        assert_eq!(back.id, 7);
        assert_eq!(back.len(), 3);
        assert_eq!(back.keyframes[1].cloud, s.keyframes[1].cloud);
        assert_eq!(
            back.keyframes[2].object_ids.as_deref(),
            Some(&[3u32; 20][..])
        );
        assert!(back
            .spacing_violations(back.gt_poses.as_ref().unwrap(), 0.2)
            .is_empty());
    }

    #[test]
    fn node_scan_count_mismatch_is_an_error() {
        let graph = PoseGraph::new(vec![Pose::identity(); 2]);
        assert!(SessionBundle::new(
            0,
            graph,
            vec![cloud(0.0)],
            1.0,
            &ScanContextParams::default()
        )
        .is_err());
    }

    #[test]
    fn missing_directory_names_the_path() {
        let err =
            SessionBundle::load("/nonexistent/session", &ScanContextParams::default()).unwrap_err();
        assert!(err.to_string().contains("/nonexistent/session"));
    }
}
