//! Simulates one session of a world file.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use lt_cli::{input_file, opt, opt_path, path, run, table, Common};
use lt_core::ltslam::ScanContextParams;
use lt_core::simworld::{simulate_session, WorldSpec};

/// Writes a session directory: `graph.txt` with drifted odometry,
/// `gt_poses.txt`, `scans/` and `labels/`.
#[derive(Parser)]
#[command(name = "ltsim", version, about)]
struct Cli {
    #[command(flatten)]
    common: Common,
    /// World file (`world` key).
    #[arg(long)]
    world: Option<PathBuf>,
    /// Session id declared by a TRAJ line (`session` key).
    #[arg(long)]
    session: Option<u32>,
    /// Output session directory (`out` key).
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    run("ltsim", || {
        let cfg = cli.common.load(&[
            ("world", opt_path(&cli.world)),
            ("session", opt(&cli.session)),
            ("out", opt_path(&cli.out)),
        ])?;
        cfg.validate(&["threads"], &["world", "session", "out"])?;
        let world = WorldSpec::read(input_file(&cfg, "world")?)
            .map_err(|e| lt_core::Error::Config(e.to_string()))?;
        let id: u32 = cfg.require("session")?;
        if !world.sessions.contains_key(&id) {
            return Err(lt_core::Error::Config(format!(
                "world has no TRAJ for session {id}"
            )));
        }
        let out = path(&cfg, "out")?;
        let bundle = simulate_session(&world, id, &ScanContextParams::default())?;
        bundle.save(&out)?;
        let points: usize = bundle.keyframes.iter().map(|k| k.cloud.len()).sum();
        print!(
            "{}",
            table(&[
                ("session", id.to_string()),
                ("keyframes", bundle.len().to_string()),
                ("points", points.to_string()),
                ("output", out.display().to_string()),
            ])
        );
        Ok(())
    })
}
