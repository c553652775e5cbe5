//! Versioned live and meta maps: ingest changes, roll back, export, parse objects.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use lt_cli::{input_dir, opt, opt_path, path, run, table, write_text, Common};
use lt_core::config::Config;
use lt_core::error::{Error, Result};
use lt_core::ltmap::{cluster_objects, rollback};
use lt_core::ltremovert::read_clouds;
use lt_core::ltslam::graph::poses_to_text;
use lt_core::ltslam::scan_file_name;
use lt_core::pipeline::{run_ltmap_update, MapStores};
use lt_core::settings::{keys, map_params, MAP_KEYS};
use lt_core::PointCloud;

#[derive(Parser)]
#[command(name = "ltmap", version, about)]
struct Cli {
    #[command(flatten)]
    common: Common,
    /// Map store directory holding `live/` and `meta/` (`store` key).
    #[arg(long, global = true)]
    store: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Style {
    Live,
    Meta,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Source {
    #[value(name = "nd_strong")]
    NdStrong,
    #[value(name = "pd_strong")]
    PdStrong,
}

impl Source {
    fn dir_name(self) -> &'static str {
        match self {
            Source::NdStrong => "nd_strong",
            Source::PdStrong => "pd_strong",
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Ingest an ltremovert output directory as a new live and meta version.
    /// The store is created from `--central` on first use.
    Update {
        /// ltremovert output directory (`ld` key).
        #[arg(long)]
        ld: Option<PathBuf>,
        /// Aligned central session, needed only to create the store (`central` key).
        #[arg(long)]
        central: Option<PathBuf>,
    },
    /// Move the head back to an earlier version by reverse-applying deltas.
    Rollback {
        /// Target version id (`to` key).
        #[arg(long)]
        to: Option<u32>,
        /// Only this map; both when omitted (`style` key).
        #[arg(long, value_enum)]
        style: Option<Style>,
        /// Also write the restored merged map: a file with `--style`, otherwise
        /// a directory receiving `live.xyz` and `meta.xyz` (`out` key).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a map version: one merged world-frame file with `--merge`,
    /// otherwise `poses.txt` plus keyframe-frame `scans/`.
    Export {
        #[arg(long, value_enum)]
        style: Option<Style>,
        /// Version id; the head when omitted (`version` key).
        #[arg(long)]
        version: Option<u32>,
        #[arg(long)]
        merge: bool,
        /// Output file (`--merge`) or directory (`out` key).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Cluster change points into objects, one cloud file per cluster.
    Objects {
        #[arg(long, value_enum)]
        source: Option<Source>,
        /// ltremovert output directory (`ld` key).
        #[arg(long)]
        ld: Option<PathBuf>,
        /// Output directory (`out` key).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn style_name(s: &Option<Style>) -> Option<String> {
    s.map(|s| if s == Style::Meta { "meta" } else { "live" }.to_string())
}

fn style(cfg: &Config) -> Result<Option<bool>> {
    match cfg.get_str("style") {
        None => Ok(None),
        Some("live") => Ok(Some(false)),
        Some("meta") => Ok(Some(true)),
        Some(other) => Err(Error::Config(format!(
            "style must be live or meta, not {other:?}"
        ))),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    run("ltmap", || {
        let mut overrides = vec![("store", opt_path(&cli.store))];
        let (allowed, required): (&[&str], &[&str]) = match &cli.command {
            Command::Update { ld, central } => {
                overrides.extend([("ld", opt_path(ld)), ("central", opt_path(central))]);
                (&["central"], &["store", "ld"])
            }
            Command::Rollback { to, style, out } => {
                overrides.extend([
                    ("to", opt(to)),
                    ("style", style_name(style)),
                    ("out", opt_path(out)),
                ]);
                (&["style", "out"], &["store", "to"])
            }
            Command::Export {
                style,
                version,
                merge,
                out,
            } => {
                overrides.extend([
                    ("style", style_name(style)),
                    ("version", opt(version)),
                    ("out", opt_path(out)),
                ]);
                if *merge {
                    overrides.push(("merge", Some("true".into())));
                }
                (&["style", "version", "merge"], &["store", "out"])
            }
            Command::Objects { source, ld, out } => {
                let name = source.map(|s| s.dir_name().to_string());
                overrides.extend([
                    ("source", name),
                    ("ld", opt_path(ld)),
                    ("out", opt_path(out)),
                ]);
                (&["store"], &["source", "ld", "out"])
            }
        };
        let cfg = cli.common.load(&overrides)?;
        cfg.validate(&keys(&[MAP_KEYS, allowed], &["threads"]), required)?;
        let params = map_params(&cfg)?;
        match cli.command {
            Command::Update { .. } => {
                let central = cfg.get_str("central").map(PathBuf::from);
                let (live, meta) = run_ltmap_update(
                    &path(&cfg, "store")?,
                    &input_dir(&cfg, "ld")?,
                    central.as_deref(),
                    &params,
                )?;
                print!(
                    "{}",
                    table(&[
                        ("live version", live.to_string()),
                        ("meta version", meta.to_string())
                    ])
                );
            }
            Command::Rollback { .. } => {
                let mut stores = MapStores::open(&path(&cfg, "store")?)?;
                let to: u32 = cfg.require("to")?;
                let which = match style(&cfg)? {
                    Some(meta) => vec![meta],
                    None => vec![false, true],
                };
                let mut rows = Vec::new();
                for meta in which {
                    let store = if meta {
                        &mut stores.meta
                    } else {
                        &mut stores.live
                    };
                    let from = store.head();
                    let restored = rollback(&store.head_version()?, to, store.graph())?;
                    store.set_head(to)?;
                    if let Some(out) = cfg.get_str("out") {
                        let name = if meta { "meta" } else { "live" };
                        let file = if style(&cfg)?.is_some() {
                            PathBuf::from(out)
                        } else {
                            PathBuf::from(out).join(format!("{name}.xyz"))
                        };
                        write_text(&file, &restored.merged().to_text())?;
                    }
                    rows.push((
                        if meta { "meta head" } else { "live head" },
                        format!("{from} -> {to} ({} points)", restored.point_count()),
                    ));
                }
                print!("{}", table(&rows));
            }
            Command::Export { .. } => {
                let stores = MapStores::open(&path(&cfg, "store")?)?;
                let store = stores.store(style(&cfg)?.unwrap_or(false));
                let id = cfg.get_or("version", store.head())?;
                let version = store.materialize(id)?;
                let out = path(&cfg, "out")?;
                if cfg.get_or("merge", false)? {
                    write_text(&out, &version.merged().to_text())?;
                } else {
                    write_text(&out.join("poses.txt"), &poses_to_text(&version.poses))?;
                    for (i, c) in version.clouds.iter().enumerate() {
                        write_text(&out.join("scans").join(scan_file_name(i)), &c.to_text())?;
                    }
                }
                print!(
                    "{}",
                    table(&[
                        ("version", id.to_string()),
                        ("points", version.point_count().to_string()),
                        ("output", out.display().to_string()),
                    ])
                );
            }
            Command::Objects { .. } => {
                let source = cfg.require_str("source")?;
                if source != "nd_strong" && source != "pd_strong" {
                    return Err(Error::Config(format!(
                        "source must be nd_strong or pd_strong, not {source:?}"
                    )));
                }
                let points =
                    PointCloud::concat(read_clouds(&input_dir(&cfg, "ld")?.join(source))?.iter());
                let objects =
                    cluster_objects(&points, params.link_radius, params.min_cluster_points);
                let out = path(&cfg, "out")?;
                std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
                let mut summary = String::new();
                for (i, o) in objects.iter().enumerate() {
                    write_text(&out.join(format!("object_{i:04}.xyz")), &o.to_text())?;
                    let n = o.len() as f64;
                    let c = o.points().iter().fold([0.0; 3], |a, p| {
                        [a[0] + p.x / n, a[1] + p.y / n, a[2] + p.z / n]
                    });
                    summary.push_str(&format!(
                        "object {i} points {} centroid {:.3} {:.3} {:.3}\n",
                        o.len(),
                        c[0],
                        c[1],
                        c[2]
                    ));
                }
                write_text(&out.join("objects.txt"), &summary)?;
                print!("{summary}");
                print!(
                    "{}",
                    table(&[
                        ("source points", points.len().to_string()),
                        ("objects", objects.len().to_string())
                    ])
                );
            }
        }
        Ok(())
    })
}
