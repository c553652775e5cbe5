//! Python module `lt_py`: session simulation, the end-to-end pipeline and the
//! evaluation metrics. Long-running calls release the GIL.

use std::collections::HashMap;
use std::path::PathBuf;

use nalgebra::Point3;
use pyo3::exceptions::{PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use lt_core::config::Config;
use lt_core::evalkit::{
    ate as core_ate, chamfer_distance as core_chamfer, chamfer_patches as core_patches, PatchParams,
};
use lt_core::ltslam::graph::read_poses;
use lt_core::ltslam::{PoseGraph, SlamParams};
use lt_core::pipeline::{self, PipelineConfig};
use lt_core::simworld::{self, WorldSpec};
use lt_core::{Error, PointCloud};

const VERSION: &str = env!("CARGO_PKG_VERSION");

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Config(_) | Error::Parse { .. } => PyValueError::new_err(e.to_string()),
        Error::Io { .. } => PyOSError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn points(xyz: Vec<(f64, f64, f64)>) -> Vec<Point3<f64>> {
    xyz.into_iter()
        .map(|(x, y, z)| Point3::new(x, y, z))
        .collect()
}

/// Simulates one session of a world file into `out`; returns the keyframe count.
#[pyfunction]
fn simulate_session(py: Python<'_>, world: PathBuf, session: u32, out: PathBuf) -> PyResult<usize> {
    py.detach(|| {
        let world = WorldSpec::read(&world)?;
        if !world.sessions.contains_key(&session) {
            return Err(Error::Config(format!("world has no session {session}")));
        }
        let bundle =
            simworld::simulate_session(&world, session, &SlamParams::default().scan_context)?;
        bundle.save(&out)?;
        Ok(bundle.len())
    })
    .map_err(to_py)
}

/// Aligns every query to `central`, detects changes between consecutive
/// sessions and builds the live and meta maps under `out`.
///
/// `options` takes the same keys as a `--config` file.
#[pyfunction]
#[pyo3(signature = (central, queries, out, options = None))]
fn run_pipeline<'py>(
    py: Python<'py>,
    central: PathBuf,
    queries: Vec<PathBuf>,
    out: PathBuf,
    options: Option<HashMap<String, String>>,
) -> PyResult<Bound<'py, PyDict>> {
    let mut cfg = Config::new("python");
    for (k, v) in options.unwrap_or_default() {
        cfg.set(&k, v);
    }
    cfg.set("central", central.display().to_string());
    cfg.set("out", out.display().to_string());
    let joined: Vec<String> = queries.iter().map(|q| q.display().to_string()).collect();
    cfg.set("query", joined.join(","));
    let pc = PipelineConfig::from_config(&cfg).map_err(to_py)?;
    let summary = py.detach(|| pipeline::run_pipeline(&pc)).map_err(|e| {
        let msg = format!("stage {}: {}", e.stage, e.source);
        match e.source {
            Error::Config(_) => PyValueError::new_err(msg),
            _ => PyRuntimeError::new_err(msg),
        }
    })?;
    let d = PyDict::new(py);
    d.set_item("sessions", summary.sessions)?;
    d.set_item("live_head", summary.live_head)?;
    d.set_item("meta_head", summary.meta_head)?;
    Ok(d)
}

/// Symmetric mean nearest-neighbour distance between two point lists.
#[pyfunction]
fn chamfer_distance(
    py: Python<'_>,
    a: Vec<(f64, f64, f64)>,
    b: Vec<(f64, f64, f64)>,
) -> PyResult<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(PyValueError::new_err("both point lists must be non-empty"));
    }
    let (a, b) = (points(a), points(b));
    Ok(py.detach(|| core_chamfer(&a, &b)))
}

/// Patch-wise Chamfer summary of two cloud files.
#[pyfunction]
#[pyo3(signature = (a, b, patch_size = 5.0, min_points = 25))]
fn chamfer_patches<'py>(
    py: Python<'py>,
    a: PathBuf,
    b: PathBuf,
    patch_size: f64,
    min_points: usize,
) -> PyResult<Bound<'py, PyDict>> {
    if !(patch_size > 0.0) {
        return Err(PyValueError::new_err("patch_size must be positive"));
    }
    let params = PatchParams {
        size: patch_size,
        min_points,
        ..PatchParams::default()
    };
    let r = py
        .detach(|| -> lt_core::Result<_> {
            Ok(core_patches(
                &PointCloud::read(&a)?,
                &PointCloud::read(&b)?,
                &params,
            ))
        })
        .map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("np_valid", r.np_valid())?;
    d.set_item("max", r.max)?;
    d.set_item("avg", r.avg)?;
    d.set_item("var", r.var)?;
    d.set_item("above", r.above)?;
    Ok(d)
}

/// Translation RMSE (m) and yaw RMSE (deg) of a pose graph against a pose file.
#[pyfunction]
fn ate(estimated: PathBuf, truth: PathBuf) -> PyResult<(f64, f64)> {
    let e = core_ate(
        PoseGraph::read(&estimated).map_err(to_py)?.nodes(),
        &read_poses(&truth).map_err(to_py)?,
    )
    .map_err(to_py)?;
    Ok((e.rmse_translation, e.rmse_yaw_deg))
}

#[pymodule]
fn lt_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", VERSION)?;
    m.add_function(wrap_pyfunction!(simulate_session, m)?)?;
    m.add_function(wrap_pyfunction!(run_pipeline, m)?)?;
    m.add_function(wrap_pyfunction!(chamfer_distance, m)?)?;
    m.add_function(wrap_pyfunction!(chamfer_patches, m)?)?;
    m.add_function(wrap_pyfunction!(ate, m)?)?;
    Ok(())
}
