//! Two-session alignment with anchor nodes.
//!
//! Each session keeps its own frame; a per-session anchor `Δ` maps it into the
//! shared world frame. Inter-session loops constrain `(Δc ⊕ xc_i)⁻¹ (Δq ⊕ xq_j)`.
//! The central anchor is pinned near identity, the query anchor is left free.

use std::collections::BTreeSet;

use rayon::prelude::*;

use super::descriptor::{
    detect_inter_session_loops, shift_to_yaw, LoopCandidate, ScanContextParams,
};
use super::factors::{Cauchy, Factor, FactorKind};
use super::graph::{information_from_sigma, PoseGraph};
use super::icp::{icp_register_with_tree, IcpParams};
use super::session::SessionBundle;
use super::solver::{solve, LmParams, SolveReport};
use crate::cloud::PointCloud;
use crate::error::{Error, Result};
use crate::geometry::{relative, Mat6, Pose, Vec6};
use crate::spatial::KdTree;
use crate::voxel::downsample;

#[derive(Clone, Debug, PartialEq)]
pub struct SlamParams {
    pub scan_context: ScanContextParams,
    pub sc_threshold: f64,
    pub sc_candidates: usize,
    pub icp: IcpParams,
    /// Voxel size used to thin submaps before ICP.
    pub icp_voxel: f64,
    /// Keyframes on each side merged into a submap.
    pub submap_window: usize,
    pub fitness_threshold: f64,
    pub fitness_scale: f64,
    pub loop_sigma: Vec6,
    pub robust_scale: f64,
    pub anchor_central_sigma: f64,
    pub anchor_query_sigma: f64,
    /// Prior holding each session's first node at its initial value.
    pub first_node_sigma: f64,
    pub radius: f64,
    pub lm: LmParams,
}

impl Default for SlamParams {
    fn default() -> Self {
        Self {
            scan_context: ScanContextParams::default(),
            sc_threshold: 0.2,
            sc_candidates: 10,
            icp: IcpParams::default(),
            icp_voxel: 0.3,
            submap_window: 1,
            fitness_threshold: 0.3,
            fitness_scale: 0.1,
            loop_sigma: Vec6::new(0.02, 0.02, 0.02, 0.002, 0.002, 0.002),
            robust_scale: 1.0,
            anchor_central_sigma: 1e-6,
            anchor_query_sigma: 1e6,
            first_node_sigma: 1e-3,
            radius: 5.0,
            lm: LmParams::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LoopConstraint {
    pub central_idx: usize,
    pub query_idx: usize,
    /// Pose of query keyframe `query_idx` in the frame of central keyframe `central_idx`.
    pub z: Pose,
    pub fitness: f64,
    pub sigma: Vec6,
}

#[derive(Clone, Debug)]
pub struct Alignment {
    /// Optimized graphs, each still in its own session frame.
    pub central: PoseGraph,
    pub query: PoseGraph,
    pub anchor_central: Pose,
    pub anchor_query: Pose,
    pub report: SolveReport,
}

impl Alignment {
    pub fn central_world(&self) -> PoseGraph {
        to_world(&self.central, &self.anchor_central)
    }

    pub fn query_world(&self) -> PoseGraph {
        to_world(&self.query, &self.anchor_query)
    }
}

#[derive(Clone, Debug)]
pub struct AlignmentOutput {
    pub alignment: Alignment,
    pub descriptor_loops: Vec<LoopConstraint>,
    pub radius_loops: Vec<LoopConstraint>,
    pub candidates: Vec<LoopCandidate>,
}

impl AlignmentOutput {
    pub fn loops(&self) -> Vec<LoopConstraint> {
        self.descriptor_loops
            .iter()
            .chain(&self.radius_loops)
            .copied()
            .collect()
    }
}

/// `base_sigma · (1 + fitness / fitness_scale)`.
pub fn adaptive_covariance(fitness: f64, base_sigma: &Vec6, fitness_scale: f64) -> Vec6 {
    base_sigma * (1.0 + fitness.max(0.0) / fitness_scale)
}

/// Replaces every node `x` by `anchor ⊕ x`.
pub fn to_world(graph: &PoseGraph, anchor: &Pose) -> PoseGraph {
    let nodes = graph.nodes().iter().map(|x| anchor.compose(x)).collect();
    graph.with_nodes(nodes).expect("node count is preserved")
}

/// Keyframe `i` and its neighbours merged in the frame of `i`, thinned by voxel.
pub fn submap(session: &SessionBundle, i: usize, window: usize, voxel: f64) -> Result<PointCloud> {
    let lo = i.saturating_sub(window);
    let hi = (i + window).min(session.len() - 1);
    let poses = session.poses();
    let parts: Vec<PointCloud> = (lo..=hi)
        .map(|k| {
            session.keyframes[k]
                .cloud
                .transformed(&relative(&poses[i], &poses[k]))
        })
        .collect();
    downsample(&PointCloud::concat(parts.iter()).drop_labels(), voxel)
}

fn register(
    central: &SessionBundle,
    query: &SessionBundle,
    ci: usize,
    qj: usize,
    initial: &Pose,
    params: &SlamParams,
) -> Option<LoopConstraint> {
    let target = submap(central, ci, params.submap_window, params.icp_voxel).ok()?;
    let source = submap(query, qj, params.submap_window, params.icp_voxel).ok()?;
    let tree = KdTree::new(target.points());
    let r = icp_register_with_tree(source.points(), &tree, initial, &params.icp).ok()?;
    (r.fitness <= params.fitness_threshold).then(|| LoopConstraint {
        central_idx: ci,
        query_idx: qj,
        z: r.pose,
        fitness: r.fitness,
        sigma: adaptive_covariance(r.fitness, &params.loop_sigma, params.fitness_scale),
    })
}

/// Verifies descriptor candidates by ICP; the yaw guess comes from the column shift.
pub fn verify_candidates(
    central: &SessionBundle,
    query: &SessionBundle,
    candidates: &[LoopCandidate],
    params: &SlamParams,
) -> Vec<LoopConstraint> {
    candidates
        .par_iter()
        .filter_map(|c| {
            let yaw = shift_to_yaw(c.yaw_shift, params.scan_context.sectors);
            let init = Pose::from_xyz_yaw(0.0, 0.0, 0.0, yaw);
            register(central, query, c.central_idx, c.query_idx, &init, params)
        })
        .collect()
}

/// Query anchor supported by the largest number of loops, ties to the lowest fitness.
fn consensus_anchor(
    central: &PoseGraph,
    query: &PoseGraph,
    anchor_c: &Pose,
    loops: &[LoopConstraint],
) -> Pose {
    let implied: Vec<Pose> = loops
        .iter()
        .map(|l| {
            anchor_c
                .compose(central.node(l.central_idx))
                .compose(&l.z)
                .compose(&query.node(l.query_idx).inverse())
        })
        .collect();
    let mut best = (0usize, f64::INFINITY, Pose::identity());
    for (a, l) in implied.iter().zip(loops) {
        let support = implied
            .iter()
            .filter(|b| {
                let d = relative(a, b);
                d.translation().norm() < 1.0 && d.rotation_angle() < 5f64.to_radians()
            })
            .count();
        if support > best.0 || (support == best.0 && l.fitness < best.1) {
            best = (support, l.fitness, *a);
        }
    }
    best.2
}

/// Joint robust optimization of both graphs and both anchors.
pub fn optimize_multisession(
    central: &PoseGraph,
    query: &PoseGraph,
    loops: &[LoopConstraint],
    params: &SlamParams,
) -> Result<Alignment> {
    optimize_from(central, query, loops, None, params)
}

fn optimize_from(
    central: &PoseGraph,
    query: &PoseGraph,
    loops: &[LoopConstraint],
    warm: Option<&Alignment>,
    params: &SlamParams,
) -> Result<Alignment> {
    if loops.is_empty() {
        return Err(Error::Unconstrained);
    }
    if central.is_empty() || query.is_empty() {
        return Err(Error::EmptyInput("both graphs need nodes".into()));
    }
    let (nc, nq) = (central.len(), query.len());
    let ac = nc + nq;
    let aq = ac + 1;
    let mut vars: Vec<Pose> = Vec::with_capacity(nc + nq + 2);
    match warm {
        Some(w) => {
            vars.extend_from_slice(w.central.nodes());
            vars.extend_from_slice(w.query.nodes());
            vars.push(w.anchor_central);
            vars.push(w.anchor_query);
        }
        None => {
            vars.extend_from_slice(central.nodes());
            vars.extend_from_slice(query.nodes());
            vars.push(Pose::identity());
            vars.push(consensus_anchor(central, query, &Pose::identity(), loops));
        }
    }

    let mut factors = Vec::new();
    let iso = |s: f64| Mat6::identity() / (s * s);
    factors.push(Factor::new(
        FactorKind::Prior {
            x: ac,
            z: Pose::identity(),
        },
        &iso(params.anchor_central_sigma),
        None,
    )?);
    factors.push(Factor::new(
        FactorKind::Prior {
            x: aq,
            z: Pose::identity(),
        },
        &iso(params.anchor_query_sigma),
        None,
    )?);
    factors.push(Factor::new(
        FactorKind::Prior {
            x: 0,
            z: *central.node(0),
        },
        &iso(params.first_node_sigma),
        None,
    )?);
    factors.push(Factor::new(
        FactorKind::Prior {
            x: nc,
            z: *query.node(0),
        },
        &iso(params.first_node_sigma),
        None,
    )?);
    for (graph, offset) in [(central, 0), (query, nc)] {
        for e in graph.edges() {
            factors.push(Factor::new(
                FactorKind::Between {
                    i: e.i + offset,
                    j: e.j + offset,
                    z: e.z,
                },
                &e.information,
                None,
            )?);
        }
    }
    let kernel = Some(Cauchy {
        c: params.robust_scale,
    });
    for l in loops {
        if l.central_idx >= nc || l.query_idx >= nq {
            return Err(Error::Invalid(format!(
                "loop ({}, {}) outside graphs of {nc} and {nq} nodes",
                l.central_idx, l.query_idx
            )));
        }
        factors.push(Factor::new(
            FactorKind::Anchored {
                ac,
                xi: l.central_idx,
                aq,
                xj: nc + l.query_idx,
                z: l.z,
            },
            &information_from_sigma(&l.sigma),
            kernel,
        )?);
    }

    let (x, report) = solve(vars, &factors, &params.lm)?;
    Ok(Alignment {
        central: central.with_nodes(x[..nc].to_vec())?,
        query: query.with_nodes(x[nc..nc + nq].to_vec())?,
        anchor_central: x[ac],
        anchor_query: x[aq],
        report,
    })
}

/// ICP against the nearest central keyframe within `radius` of each query
/// keyframe not listed in `skip`, starting from the current aligned poses.
pub fn radius_refine_loops(
    central: &SessionBundle,
    query: &SessionBundle,
    alignment: &Alignment,
    radius: f64,
    skip: &BTreeSet<usize>,
    params: &SlamParams,
) -> Vec<LoopConstraint> {
    let cw = alignment.central_world();
    let qw = alignment.query_world();
    (0..query.len())
        .into_par_iter()
        .filter(|j| !skip.contains(j))
        .filter_map(|j| {
            let pj = qw.node(j);
            let (ci, d) = cw
                .nodes()
                .iter()
                .enumerate()
                .map(|(i, p)| (i, (p.translation() - pj.translation()).norm()))
                .min_by(|a, b| a.1.total_cmp(&b.1))?;
            if d > radius {
                return None;
            }
            let init = relative(cw.node(ci), pj);
            register(central, query, ci, j, &init, params)
        })
        .collect()
}

/// Descriptor loops, ICP verification, joint optimization, radius refinement
/// and a final joint optimization.
pub fn align_sessions(
    central: &SessionBundle,
    query: &SessionBundle,
    params: &SlamParams,
) -> Result<AlignmentOutput> {
    let candidates = detect_inter_session_loops(
        &central.descriptors(),
        &query.descriptors(),
        params.sc_threshold,
        params.sc_candidates,
    )?;
    let descriptor_loops = verify_candidates(central, query, &candidates, params);
    if descriptor_loops.is_empty() {
        return Err(Error::Unconstrained);
    }
    let coarse = optimize_multisession(&central.graph, &query.graph, &descriptor_loops, params)?;
    let skip: BTreeSet<usize> = descriptor_loops.iter().map(|l| l.query_idx).collect();
    let radius_loops = radius_refine_loops(central, query, &coarse, params.radius, &skip, params);
    let all: Vec<LoopConstraint> = descriptor_loops
        .iter()
        .chain(&radius_loops)
        .copied()
        .collect();
    let alignment = optimize_from(&central.graph, &query.graph, &all, Some(&coarse), params)?;
    Ok(AlignmentOutput {
        alignment,
        descriptor_loops,
        radius_loops,
        candidates,
    })
}

/// Writes `VERTEX_SE3:QUAT` records for the central (id 0) and query (id 1) anchors.
pub fn anchors_to_text(anchor_central: &Pose, anchor_query: &Pose) -> String {
    super::graph::poses_to_text(&[*anchor_central, *anchor_query])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn straight(n: usize, offset: &Pose) -> Vec<Pose> {
        (0..n)
            .map(|i| {
                offset
                    .inverse()
                    .compose(&Pose::from_xyz_yaw(i as f64, 0.0, 1.8, 0.0))
            })
            .collect()
    }

    fn exact_loops(c: &[Pose], q: &[Pose], g: &Pose, every: usize) -> Vec<LoopConstraint> {
        (0..c.len())
            .step_by(every)
            .map(|i| LoopConstraint {
                central_idx: i,
                query_idx: i,
                z: relative(&c[i], &g.compose(&q[i])),
                fitness: 0.0,
                sigma: SlamParams::default().loop_sigma,
            })
            .collect()
    }

    #[test]
    fn adaptive_covariance_scales_linearly() {
        let base = Vec6::from_element(0.1);
        assert_eq!(adaptive_covariance(0.0, &base, 0.1), base);
        assert!((adaptive_covariance(0.1, &base, 0.1) - base * 2.0).norm() < 1e-15);
        assert!(
            adaptive_covariance(0.2, &base, 0.1)[0] >= adaptive_covariance(0.05, &base, 0.1)[0]
        );
    }

    #[test]
    fn to_world_identity_and_translation() {
        let g = PoseGraph::from_chain(straight(5, &Pose::identity()), &Vec6::from_element(0.1));
        assert_eq!(to_world(&g, &Pose::identity()).nodes(), g.nodes());
        let moved = to_world(&g, &Pose::from_translation(1.0, 2.0, 3.0));
        for (a, b) in moved.nodes().iter().zip(g.nodes()) {
            assert!(
                (a.translation() - b.translation() - nalgebra::Vector3::new(1.0, 2.0, 3.0)).norm()
                    < 1e-12
            );
        }
    }

    #[test]
    fn zero_loops_is_unconstrained() {
        let g = PoseGraph::from_chain(straight(3, &Pose::identity()), &Vec6::from_element(0.1));
        assert!(matches!(
            optimize_multisession(&g, &g, &[], &SlamParams::default()),
            Err(Error::Unconstrained)
        ));
    }

    #[test]
    fn recovers_known_offset_with_exact_loops() {
        let g = Pose::from_xyz_yaw(10.0, -3.0, 0.2, 45f64.to_radians());
        let c = straight(30, &Pose::identity());
        let q = straight(30, &g);
        let gc = PoseGraph::from_chain(c.clone(), &Vec6::from_element(0.01));
        let gq = PoseGraph::from_chain(q.clone(), &Vec6::from_element(0.01));
        let loops = exact_loops(&c, &q, &g, 3);
        let a = optimize_multisession(&gc, &gq, &loops, &SlamParams::default()).unwrap();
        let err = relative(&a.anchor_query, &g);
        assert!(err.translation().norm() < 1e-6, "{:?}", a.anchor_query);
        assert!(err.rotation_angle() < 1e-6);
        for (x, y) in a.query.nodes().iter().zip(&q) {
            assert!(relative(x, y).local_coordinates().norm() < 1e-6);
        }
    }

    #[test]
    fn global_transform_leaves_optimal_residuals_unchanged() {
        let g = Pose::from_xyz_yaw(4.0, 1.0, 0.0, 0.3);
        let c = straight(20, &Pose::identity());
        let q = straight(20, &g);
        let loops = exact_loops(&c, &q, &g, 2);
        let t = Pose::from_xyz_rpy(-7.0, 3.0, 1.0, 0.0, 0.0, 1.2);
        let moved_c: Vec<Pose> = c.iter().map(|p| t.compose(p)).collect();
        let moved_q: Vec<Pose> = q.iter().map(|p| t.compose(p)).collect();
        let p = SlamParams::default();
        let a = optimize_multisession(
            &PoseGraph::from_chain(c, &Vec6::from_element(0.01)),
            &PoseGraph::from_chain(q, &Vec6::from_element(0.01)),
            &loops,
            &p,
        )
        .unwrap();
        // loops measured between the moved frames are the same relative poses
        let b = optimize_multisession(
            &PoseGraph::from_chain(moved_c, &Vec6::from_element(0.01)),
            &PoseGraph::from_chain(moved_q, &Vec6::from_element(0.01)),
            &loops,
            &p,
        )
        .unwrap();
        for l in &loops {
            let ra = relative(
                &a.anchor_central.compose(a.central.node(l.central_idx)),
                &a.anchor_query.compose(a.query.node(l.query_idx)),
            );
            let rb = relative(
                &b.anchor_central.compose(b.central.node(l.central_idx)),
                &b.anchor_query.compose(b.query.node(l.query_idx)),
            );
            assert!(relative(&ra, &rb).local_coordinates().norm() < 1e-6);
        }
    }
}
