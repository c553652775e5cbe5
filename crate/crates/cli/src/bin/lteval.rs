//! Evaluation reports: Chamfer patches, change detection, trajectory error
//! and delta-map efficiency.
//!
//! Machine-readable `key value` lines go to stdout, a summary table to stderr.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use lt_cli::{input_dir, input_file, opt, opt_path, path, run, table, Common};
use lt_core::config::Config;
use lt_core::error::{Error, Result};
use lt_core::evalkit::{ate, chamfer_patches, detection_scores, efficiency_report, PatchParams};
use lt_core::ltremovert::detect_changes;
use lt_core::ltslam::graph::read_poses;
use lt_core::ltslam::{PoseGraph, SessionBundle, SlamParams};
use lt_core::pipeline::{read_ld, MapStores};
use lt_core::settings::{keys, removert_params, REMOVERT_KEYS, SENSOR_KEYS};
use lt_core::simworld::{ground_truth_ld, WorldSpec};
use lt_core::PointCloud;

#[derive(Parser)]
#[command(name = "lteval", version, about)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Patch-wise Chamfer distance between two cloud files.
    Chamfer {
        /// Evaluated cloud (`a` key).
        #[arg(long)]
        a: Option<PathBuf>,
        /// Reference cloud (`b` key).
        #[arg(long)]
        b: Option<PathBuf>,
        /// Cubic patch edge in meters (`patch_size` key, default 5).
        #[arg(long)]
        patch_size: Option<f64>,
        /// Points both clouds need in a patch (`min_points` key, default 25).
        #[arg(long)]
        min_points: Option<usize>,
    },
    /// Precision and recall of an ltremovert output against simulator truth.
    Detect {
        /// World file the sessions were simulated from (`world` key).
        #[arg(long)]
        world: Option<PathBuf>,
        /// Aligned central session (`central` key).
        #[arg(long)]
        central: Option<PathBuf>,
        /// Aligned query session (`query` key).
        #[arg(long)]
        query: Option<PathBuf>,
        /// ltremovert output directory (`ld` key).
        #[arg(long)]
        ld: Option<PathBuf>,
        /// Match radius in meters (`match_radius` key, default 0.2).
        #[arg(long)]
        match_radius: Option<f64>,
    },
    /// RMS translation and yaw error after first-pose alignment.
    Ate {
        /// Pose-graph file, or a session directory's `graph.txt` (`estimated` key).
        #[arg(long)]
        estimated: Option<PathBuf>,
        /// Pose file, or a session directory's `gt_poses.txt` (`truth` key).
        #[arg(long)]
        truth: Option<PathBuf>,
    },
    /// Delta storage and compose time between two versions against a snapshot
    /// and a fresh change detection between the two sessions.
    Efficiency {
        /// Map store directory (`store` key).
        #[arg(long)]
        store: Option<PathBuf>,
        /// Use the meta store (`style: meta`).
        #[arg(long)]
        meta: bool,
        /// Earlier version id (`from` key).
        #[arg(long)]
        from: Option<u32>,
        /// Later version id (`to` key).
        #[arg(long)]
        to: Option<u32>,
        /// Aligned session of version `from` (`central` key).
        #[arg(long)]
        central: Option<PathBuf>,
        /// Aligned session of version `to` (`query` key).
        #[arg(long)]
        query: Option<PathBuf>,
    },
}

fn file_in(p: PathBuf, name: &str) -> PathBuf {
    if p.is_dir() {
        p.join(name)
    } else {
        p
    }
}

fn session(cfg: &Config, key: &str) -> Result<SessionBundle> {
    SessionBundle::load(input_dir(cfg, key)?, &SlamParams::default().scan_context)
}

fn report(machine: &str, rows: &[(&str, String)]) {
    print!("{machine}");
    eprint!("{}", table(rows));
}

fn chamfer(cfg: &Config) -> Result<()> {
    let d = PatchParams::default();
    let params = PatchParams {
        size: cfg.get_or("patch_size", d.size)?,
        min_points: cfg.get_or("min_points", d.min_points)?,
        thresholds: cfg.get_list("thresholds")?.unwrap_or(d.thresholds),
    };
    if !(params.size > 0.0) {
        return Err(Error::Config("patch_size must be positive".into()));
    }
    let a = PointCloud::read(input_file(cfg, "a")?)?;
    let b = PointCloud::read(input_file(cfg, "b")?)?;
    let r = chamfer_patches(&a, &b, &params);
    let mut rows = vec![
        ("valid patches", r.np_valid().to_string()),
        (
            "max / avg / var",
            format!("{:.4} / {:.4} / {:.4}", r.max, r.avg, r.var),
        ),
    ];
    let above: Vec<String> = params
        .thresholds
        .iter()
        .zip(&r.above)
        .map(|(t, n)| format!("{n} (>{t})"))
        .collect();
    rows.push(("patches above", above.join(", ")));
    report(&r.to_text(), &rows);
    Ok(())
}

fn detect(cfg: &Config) -> Result<()> {
    let world = WorldSpec::read(input_file(cfg, "world")?)?;
    let (central, query) = (session(cfg, "central")?, session(cfg, "query")?);
    let ld = read_ld(&input_dir(cfg, "ld")?)?;
    let radius: f64 = cfg.get_or("match_radius", 0.2)?;
    if !(radius > 0.0) {
        return Err(Error::Config("match_radius must be positive".into()));
    }
    let s = detection_scores(&ld, &ground_truth_ld(&world, &central, &query)?, radius);
    let row = |x: &lt_core::evalkit::Scores| {
        format!(
            "P {:.4}  R {:.4}  F1 {:.4}  ({} predicted, {} truth)",
            x.precision, x.recall, x.f1, x.predicted, x.truth
        )
    };
    report(
        &s.to_text(),
        &[("ND (strong)", row(&s.nd)), ("PD (raw)", row(&s.pd))],
    );
    Ok(())
}

fn trajectory_error(cfg: &Config) -> Result<()> {
    let estimated = file_in(path(cfg, "estimated")?, "graph.txt");
    let truth = file_in(path(cfg, "truth")?, "gt_poses.txt");
    for (key, p) in [("estimated", &estimated), ("truth", &truth)] {
        if !p.is_file() {
            return Err(Error::Config(format!(
                "{key} file not found: {}",
                p.display()
            )));
        }
    }
    let e = ate(PoseGraph::read(&estimated)?.nodes(), &read_poses(&truth)?)?;
    report(
        &format!(
            "rmse_translation {:.6}\nrmse_yaw_deg {:.6}\n",
            e.rmse_translation, e.rmse_yaw_deg
        ),
        &[
            ("translation RMSE", format!("{:.4} m", e.rmse_translation)),
            ("yaw RMSE", format!("{:.4} deg", e.rmse_yaw_deg)),
        ],
    );
    Ok(())
}

fn efficiency(cfg: &Config) -> Result<()> {
    let params = removert_params(cfg)?;
    let stores = MapStores::open(&path(cfg, "store")?)?;
    let store = stores.store(cfg.get_str("style") == Some("meta"));
    let (from, to): (u32, u32) = (cfg.require("from")?, cfg.require("to")?);
    let (central, query) = (session(cfg, "central")?, session(cfg, "query")?);
    let r = efficiency_report(store, from, to, || {
        detect_changes(&central, &query, &params).map(|_| ())
    })?;
    report(
        &r.to_text(),
        &[
            (
                "delta / snapshot bytes",
                format!(
                    "{} / {} ({:.1}%)",
                    r.delta_bytes,
                    r.snapshot_bytes,
                    100.0 * r.storage_ratio()
                ),
            ),
            (
                "compose / recompute",
                format!(
                    "{:.3} s / {:.3} s ({:.1}x)",
                    r.compose_secs,
                    r.recompute_secs,
                    r.speedup()
                ),
            ),
        ],
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    run("lteval", || {
        let p = |v: &Option<PathBuf>| opt_path(v);
        let (overrides, allowed, required): (Vec<(&str, Option<String>)>, Vec<&str>, &[&str]) =
            match &cli.command {
                Command::Chamfer {
                    a,
                    b,
                    patch_size,
                    min_points,
                } => (
                    vec![
                        ("a", p(a)),
                        ("b", p(b)),
                        ("patch_size", opt(patch_size)),
                        ("min_points", opt(min_points)),
                    ],
                    vec!["patch_size", "min_points", "thresholds"],
                    &["a", "b"],
                ),
                Command::Detect {
                    world,
                    central,
                    query,
                    ld,
                    match_radius,
                } => (
                    vec![
                        ("world", p(world)),
                        ("central", p(central)),
                        ("query", p(query)),
                        ("ld", p(ld)),
                        ("match_radius", opt(match_radius)),
                    ],
                    vec!["match_radius"],
                    &["world", "central", "query", "ld"],
                ),
                Command::Ate { estimated, truth } => (
                    vec![("estimated", p(estimated)), ("truth", p(truth))],
                    vec![],
                    &["estimated", "truth"],
                ),
                Command::Efficiency {
                    store,
                    meta,
                    from,
                    to,
                    central,
                    query,
                } => (
                    vec![
                        ("store", p(store)),
                        ("style", meta.then(|| "meta".to_string())),
                        ("from", opt(from)),
                        ("to", opt(to)),
                        ("central", p(central)),
                        ("query", p(query)),
                    ],
                    keys(&[SENSOR_KEYS, REMOVERT_KEYS], &["style"]),
                    &["store", "from", "to", "central", "query"],
                ),
            };
        let cfg = cli.common.load(&overrides)?;
        cfg.validate(&keys(&[&allowed], &["threads"]), required)?;
        match cli.command {
            Command::Chamfer { .. } => chamfer(&cfg),
            Command::Detect { .. } => detect(&cfg),
            Command::Ate { .. } => trajectory_error(&cfg),
            Command::Efficiency { .. } => efficiency(&cfg),
        }
    })
}
