//! Pose graphs and their g2o-style text format.
//!
//! ```text
//! VERTEX_SE3:QUAT id tx ty tz qx qy qz qw
//! EDGE_SE3:QUAT i j tx ty tz qx qy qz qw  I11 I12 .. I16 I22 .. I66
//! ```
//!
//! The 21 trailing numbers are the upper triangle of the information matrix,
//! row-major. An edge `(i, i + 1)` is odometry; any other edge is an
//! intra-session loop.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::{relative, Mat6, Pose, Vec6};

#[derive(Clone, Debug, PartialEq)]
pub struct Edge {
    pub i: usize,
    pub j: usize,
    /// Pose of node `j` expressed in the frame of node `i`.
    pub z: Pose,
    pub information: Mat6,
}

impl Edge {
    pub fn from_sigma(i: usize, j: usize, z: Pose, sigma: &Vec6) -> Edge {
        Edge {
            i,
            j,
            z,
            information: information_from_sigma(sigma),
        }
    }

    /// Standard deviations implied by the diagonal of the information matrix.
    pub fn sigma(&self) -> Vec6 {
        Vec6::from_fn(|k, _| 1.0 / self.information[(k, k)].sqrt())
    }
}

pub fn information_from_sigma(sigma: &Vec6) -> Mat6 {
    Mat6::from_diagonal(&sigma.map(|s| 1.0 / (s * s)))
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct PoseGraph {
    nodes: Vec<Pose>,
    odometry: Vec<Edge>,
    loops: Vec<Edge>,
}

impl PoseGraph {
    pub fn new(nodes: Vec<Pose>) -> PoseGraph {
        PoseGraph {
            nodes,
            odometry: Vec::new(),
            loops: Vec::new(),
        }
    }

    /// Chain of odometry edges measured from consecutive node values.
    pub fn from_chain(nodes: Vec<Pose>, sigma: &Vec6) -> PoseGraph {
        let mut g = PoseGraph::new(nodes);
        for i in 1..g.nodes.len() {
            let z = relative(&g.nodes[i - 1], &g.nodes[i]);
            g.odometry.push(Edge::from_sigma(i - 1, i, z, sigma));
        }
        g
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[Pose] {
        &self.nodes
    }

    pub fn node(&self, i: usize) -> &Pose {
        &self.nodes[i]
    }

    pub fn odometry(&self) -> &[Edge] {
        &self.odometry
    }

    pub fn loops(&self) -> &[Edge] {
        &self.loops
    }

    /// Graph with the same edges and replaced node values.
    pub fn with_nodes(&self, nodes: Vec<Pose>) -> Result<PoseGraph> {
        if nodes.len() != self.nodes.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} node values for a graph of {} nodes",
                nodes.len(),
                self.nodes.len()
            )));
        }
        Ok(PoseGraph {
            nodes,
            odometry: self.odometry.clone(),
            loops: self.loops.clone(),
        })
    }

    pub fn add_edge(&mut self, edge: Edge) -> Result<()> {
        let n = self.nodes.len();
        if edge.i >= n || edge.j >= n || edge.i == edge.j {
            return Err(Error::Invalid(format!(
                "edge ({}, {}) in a graph of {n} nodes",
                edge.i, edge.j
            )));
        }
        if edge.j == edge.i + 1 {
            self.odometry.push(edge);
        } else {
            self.loops.push(edge);
        }
        Ok(())
    }

    pub fn edges(&self) -> impl Iterator<Item = &Edge> {
        self.odometry.iter().chain(self.loops.iter())
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (id, p) in self.nodes.iter().enumerate() {
            write_vertex(&mut s, id, p);
        }
        let mut edges: Vec<&Edge> = self.edges().collect();
        edges.sort_by_key(|e| (e.i, e.j));
        for e in edges {
            let t = e.z.translation();
            let [qw, qx, qy, qz] = e.z.quaternion_wxyz();
            let _ = write!(
                s,
                "EDGE_SE3:QUAT {} {} {} {} {} {} {} {} {}",
                e.i, e.j, t.x, t.y, t.z, qx, qy, qz, qw
            );
            for r in 0..6 {
                for c in r..6 {
                    let _ = write!(s, " {}", e.information[(r, c)]);
                }
            }
            s.push('\n');
        }
        s
    }

    pub fn parse(text: &str, origin: &str) -> Result<PoseGraph> {
        let mut vertices: Vec<(usize, Pose, usize)> = Vec::new();
        let mut edges: Vec<(Edge, usize)> = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            let num = |k: usize| -> Result<f64> {
                fields
                    .get(k)
                    .and_then(|s| s.parse::<f64>().ok())
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Error::parse(origin, n + 1, format!("bad or missing field {k}")))
            };
            let id = |k: usize| -> Result<usize> {
                fields
                    .get(k)
                    .and_then(|s| s.parse::<usize>().ok())
                    .ok_or_else(|| Error::parse(origin, n + 1, format!("bad node id in field {k}")))
            };
            let pose_at = |k: usize| -> Result<Pose> {
                let v: Vec<f64> = (k..k + 7).map(num).collect::<Result<_>>()?;
                Pose::from_wxyz([v[0], v[1], v[2]], v[6], v[3], v[4], v[5])
                    .map_err(|e| Error::parse(origin, n + 1, e.to_string()))
            };
            match fields[0] {
                "VERTEX_SE3:QUAT" => {
                    if fields.len() != 9 {
                        return Err(Error::parse(origin, n + 1, "vertex needs 8 values"));
                    }
                    vertices.push((id(1)?, pose_at(2)?, n + 1));
                }
                "EDGE_SE3:QUAT" => {
                    if fields.len() != 31 {
                        return Err(Error::parse(origin, n + 1, "edge needs 30 values"));
                    }
                    let mut info = Mat6::zeros();
                    let mut k = 10;
                    for r in 0..6 {
                        for c in r..6 {
                            let v = num(k)?;
                            info[(r, c)] = v;
                            info[(c, r)] = v;
                            k += 1;
                        }
                    }
                    let edge = Edge {
                        i: id(1)?,
                        j: id(2)?,
                        z: pose_at(3)?,
                        information: info,
                    };
                    edges.push((edge, n + 1));
                }
                other => {
                    return Err(Error::parse(
                        origin,
                        n + 1,
                        format!("unknown record {other:?}"),
                    ));
                }
            }
        }
        vertices.sort_by_key(|v| v.0);
        let mut nodes = Vec::with_capacity(vertices.len());
        for (k, (id, pose, line)) in vertices.into_iter().enumerate() {
            if id != k {
                return Err(Error::parse(
                    origin,
                    line,
                    format!("node ids must be 0..n without gaps or duplicates, found {id} at position {k}"),
                ));
            }
            nodes.push(pose);
        }
        let mut g = PoseGraph::new(nodes);
        for (e, line) in edges {
            g.add_edge(e)
                .map_err(|err| Error::parse(origin, line, err.to_string()))?;
        }
        Ok(g)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<PoseGraph> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        PoseGraph::parse(&text, &path.display().to_string())
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }
}

pub(crate) fn write_vertex(s: &mut String, id: usize, p: &Pose) {
    let t = p.translation();
    let [qw, qx, qy, qz] = p.quaternion_wxyz();
    let _ = writeln!(
        s,
        "VERTEX_SE3:QUAT {id} {} {} {} {} {} {} {}",
        t.x, t.y, t.z, qx, qy, qz, qw
    );
}

/// Writes poses as vertex records only.
pub fn poses_to_text(poses: &[Pose]) -> String {
    let mut s = String::new();
    for (id, p) in poses.iter().enumerate() {
        write_vertex(&mut s, id, p);
    }
    s
}

pub fn read_poses(path: impl AsRef<Path>) -> Result<Vec<Pose>> {
    Ok(PoseGraph::read(path)?.nodes)
}
