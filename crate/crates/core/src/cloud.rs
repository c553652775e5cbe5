//! Point-cloud container and the plain-text `x y z [label]` format.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::Point3;

use crate::error::{Error, Result};
use crate::geometry::Pose;

/// Ground-truth class tags written by the simulator.
pub mod label {
    pub const STATIC: u8 = 0;
    pub const HD: u8 = 1;
    pub const LD_APPEARING: u8 = 2;
    pub const LD_DISAPPEARING: u8 = 3;
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct PointCloud {
    points: Vec<Point3<f64>>,
    labels: Option<Vec<u8>>,
}

impl PointCloud {
    pub fn new(points: Vec<Point3<f64>>) -> Result<Self> {
        check_finite(&points)?;
        Ok(Self {
            points,
            labels: None,
        })
    }

    pub fn with_labels(points: Vec<Point3<f64>>, labels: Vec<u8>) -> Result<Self> {
        check_finite(&points)?;
        if labels.len() != points.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} labels for {} points",
                labels.len(),
                points.len()
            )));
        }
        Ok(Self {
            points,
            labels: Some(labels),
        })
    }

    /// Builds a cloud from points already known to be finite.
    pub(crate) fn from_trusted(points: Vec<Point3<f64>>, labels: Option<Vec<u8>>) -> Self {
        debug_assert!(labels.as_ref().is_none_or(|l| l.len() == points.len()));
        Self { points, labels }
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Point3<f64>] {
        &self.points
    }

    pub fn labels(&self) -> Option<&[u8]> {
        self.labels.as_deref()
    }

    pub fn label(&self, i: usize) -> Option<u8> {
        self.labels.as_ref().map(|l| l[i])
    }

    pub fn into_points(self) -> Vec<Point3<f64>> {
        self.points
    }

    pub fn transformed(&self, pose: &Pose) -> PointCloud {
        PointCloud {
            points: self
                .points
                .iter()
                .map(|p| pose.transform_point(p))
                .collect(),
            labels: self.labels.clone(),
        }
    }

    /// Points at `indices`, in the given order.
    pub fn select(&self, indices: &[usize]) -> PointCloud {
        PointCloud {
            points: indices.iter().map(|&i| self.points[i]).collect(),
            labels: self
                .labels
                .as_ref()
                .map(|l| indices.iter().map(|&i| l[i]).collect()),
        }
    }

    /// Keeps the points for which `keep` returns true, preserving order.
    pub fn filter(&self, mut keep: impl FnMut(usize, &Point3<f64>) -> bool) -> PointCloud {
        let idx: Vec<usize> = self
            .points
            .iter()
            .enumerate()
            .filter(|(i, p)| keep(*i, p))
            .map(|(i, _)| i)
            .collect();
        self.select(&idx)
    }

    /// Appends `other`. Labels survive only if both sides carry them.
    pub fn append(&mut self, other: &PointCloud) {
        if self.points.is_empty() && self.labels.is_none() {
            self.labels = other.labels.clone();
            self.points.extend_from_slice(&other.points);
            return;
        }
        match (&mut self.labels, &other.labels) {
            (Some(a), Some(b)) => a.extend_from_slice(b),
            (Some(_), None) if !other.is_empty() => self.labels = None,
            _ => {}
        }
        self.points.extend_from_slice(&other.points);
    }

    pub fn concat<'a>(clouds: impl IntoIterator<Item = &'a PointCloud>) -> PointCloud {
        let mut out = PointCloud::empty();
        for c in clouds {
            out.append(c);
        }
        out
    }

    pub fn drop_labels(mut self) -> PointCloud {
        self.labels = None;
        self
    }

    pub fn parse(text: &str, origin: &str) -> Result<PointCloud> {
        let mut points = Vec::new();
        let mut labels = Vec::new();
        let mut labelled: Option<bool> = None;
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            let has_label = match fields.len() {
                3 => false,
                4 => true,
                k => {
                    return Err(Error::parse(
                        origin,
                        n + 1,
                        format!("expected 3 or 4 fields, got {k}"),
                    ))
                }
            };
            if *labelled.get_or_insert(has_label) != has_label {
                return Err(Error::parse(
                    origin,
                    n + 1,
                    "mixed labelled and unlabelled points",
                ));
            }
            let mut xyz = [0.0; 3];
            for (k, v) in xyz.iter_mut().enumerate() {
                *v = fields[k]
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| {
                        Error::parse(origin, n + 1, format!("bad coordinate {:?}", fields[k]))
                    })?;
            }
            points.push(Point3::from(xyz));
            if has_label {
                let l = fields[3].parse::<u8>().map_err(|_| {
                    Error::parse(origin, n + 1, format!("bad label {:?}", fields[3]))
                })?;
                labels.push(l);
            }
        }
        Ok(PointCloud {
            points,
            labels: labelled.filter(|&l| l).map(|_| labels),
        })
    }

    pub fn read(path: impl AsRef<Path>) -> Result<PointCloud> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn to_text(&self) -> String {
        let mut s = String::with_capacity(self.points.len() * 32);
        for (i, p) in self.points.iter().enumerate() {
            let _ = write!(s, "{:.4} {:.4} {:.4}", p.x, p.y, p.z);
            if let Some(l) = &self.labels {
                let _ = write!(s, " {}", l[i]);
            }
            s.push('\n');
        }
        s
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }
}

fn check_finite(points: &[Point3<f64>]) -> Result<()> {
    match points
        .iter()
        .position(|p| !p.coords.iter().all(|v| v.is_finite()))
    {
        Some(i) => Err(Error::Invalid(format!(
            "point {i} has a non-finite coordinate"
        ))),
        None => Ok(()),
    }
}
