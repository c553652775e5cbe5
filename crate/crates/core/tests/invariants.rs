//! Whole-system properties on the bundled scenarios.

use std::path::{Path, PathBuf};

use lt_core::error::Error;
use lt_core::evalkit::detection_scores;
use lt_core::ltmap::MapParams;
use lt_core::ltremovert::{detect_changes, map_with_sources, RemovertParams};
use lt_core::ltslam::{SessionBundle, SlamParams};
use lt_core::pipeline::{read_ld, run_pipeline, PipelineConfig};
use lt_core::simworld::{ground_truth_ld, simulate_session, WorldSpec};
use lt_core::{KdTree, SpatialIndex};

fn scenario(name: &str) -> WorldSpec {
    let path = Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../scenarios")
        .join(format!("{name}.world"));
    WorldSpec::read(&path).unwrap()
}

fn removert_params(w: &WorldSpec) -> RemovertParams {
    let s = &w.sensor;
    RemovertParams::for_sensor(s.channels, s.fov_up, s.fov_down, s.az_step, s.max_range)
}

fn simulate(w: &WorldSpec, id: u32) -> SessionBundle {
    simulate_session(w, id, &SlamParams::default().scan_context).unwrap()
}

fn at_truth(b: SessionBundle) -> SessionBundle {
    let g = b.graph.with_nodes(b.gt_poses.clone().unwrap()).unwrap();
    b.with_poses(g).unwrap()
}

fn config(w: &WorldSpec, central: PathBuf, queries: Vec<PathBuf>, out: PathBuf) -> PipelineConfig {
    PipelineConfig {
        central,
        queries,
        out,
        slam: SlamParams::default(),
        removert: removert_params(w),
        map: MapParams {
            assoc_range: w.sensor.max_range,
            ..MapParams::default()
        },
    }
}

#[test]
fn noise_free_aligned_static_world_flags_only_lone_points() {
    let mut w = scenario("all_static");
    w.sensor.noise = 0.0;
    let a = at_truth(simulate(&w, 1));
    let b = at_truth(simulate(&w, 2));
    let out = detect_changes(&a, &b, &removert_params(&w)).unwrap();
    assert_eq!(out.central_hd.dynamic_count(), 0);
    assert_eq!(out.query_hd.dynamic_count(), 0);
    assert!(out.ld.nd_strong().is_empty());
    // lone points lie on surfaces the central session saw, which is strong PD
    assert_eq!(out.ld.pd_strong().len(), out.ld.pd_raw.len());
    // the neighbour-count rule still flags points with fewer than k neighbours
    // in their own map; with identical maps those are the same on both sides
    assert_eq!(out.ld.nd_raw.points(), out.ld.pd_raw.points());
    let params = removert_params(&w);
    let (map, _) = map_with_sources(&out.central_hd.static_scans, a.poses());
    let tree = KdTree::new(map.points());
    for p in out.ld.nd_raw.points() {
        assert!(!tree.has_at_least(p, params.ld_r, params.ld_k));
    }
    assert!(
        out.ld.nd_raw.len() * 10_000 < map.len(),
        "{} of {}",
        out.ld.nd_raw.len(),
        map.len()
    );
}

#[test]
fn zero_drift_pipeline_reproduces_truth() {
    let w = scenario("appear_disappear");
    let dir = tempfile::tempdir().unwrap();
    let mut paths = Vec::new();
    let mut sessions = Vec::new();
    for id in [1, 2] {
        let s = simulate(&w, id);
        let p = dir.path().join(format!("s{id}"));
        s.save(&p).unwrap();
        paths.push(p);
        sessions.push(s);
    }
    let out = dir.path().join("out");
    run_pipeline(&config(
        &w,
        paths[0].clone(),
        vec![paths[1].clone()],
        out.clone(),
    ))
    .unwrap();
    let ld = read_ld(&out.join("removert/1_2")).unwrap();
    let truth = ground_truth_ld(&w, &sessions[0], &sessions[1]).unwrap();
    let s = detection_scores(&ld, &truth, 0.2);
    // pooled over ND and PD
    let precision = (s.nd.matched_predicted + s.pd.matched_predicted) as f64
        / (s.nd.predicted + s.pd.predicted) as f64;
    let recall =
        (s.nd.matched_truth + s.pd.matched_truth) as f64 / (s.nd.truth + s.pd.truth) as f64;
    let f1 = 2.0 * precision * recall / (precision + recall);
    assert!(
        f1 >= 0.95,
        "pooled F1 {f1:.4}; ND {:.4}, PD {:.4}",
        s.nd.f1,
        s.pd.f1
    );
}

#[test]
fn missing_session_is_an_input_error() {
    let w = scenario("all_static");
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(
        &w,
        dir.path().join("nope"),
        vec![dir.path().join("also_nope")],
        dir.path().join("out"),
    );
    let err = run_pipeline(&cfg).unwrap_err();
    assert_eq!(err.stage, "input");
    assert!(matches!(err.source, Error::Config(_)));
    assert!(!dir.path().join("out").exists());
}
