//! Aligns a query session onto a central session.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use lt_cli::{input_dir, opt_path, path, run, table, Common};
use lt_core::pipeline::run_ltslam;
use lt_core::settings::{keys, slam_params, SLAM_KEYS};

/// Multi-session alignment. Writes `central/` and `query/` session
/// directories with world-frame graphs, plus `anchors.txt` and `loops.txt`.
#[derive(Parser)]
#[command(name = "ltslam", version, about)]
struct Cli {
    #[command(flatten)]
    common: Common,
    /// Central session directory (`central` key).
    #[arg(long)]
    central: Option<PathBuf>,
    /// Query session directory (`query` key).
    #[arg(long)]
    query: Option<PathBuf>,
    /// Output directory (`out` key).
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    run("ltslam", || {
        let cfg = cli.common.load(&[
            ("central", opt_path(&cli.central)),
            ("query", opt_path(&cli.query)),
            ("out", opt_path(&cli.out)),
        ])?;
        cfg.validate(
            &keys(&[SLAM_KEYS], &["threads"]),
            &["central", "query", "out"],
        )?;
        let params = slam_params(&cfg)?;
        let (central, query, out) = (
            input_dir(&cfg, "central")?,
            input_dir(&cfg, "query")?,
            path(&cfg, "out")?,
        );
        let (c, q) = run_ltslam(&central, &query, &out, &params)?;
        let loops = std::fs::read_to_string(out.join("loops.txt"))
            .map(|s| s.lines().count())
            .unwrap_or(0);
        print!(
            "{}",
            table(&[
                (
                    "central session",
                    format!("{} ({} keyframes)", c.id, c.len())
                ),
                ("query session", format!("{} ({} keyframes)", q.id, q.len())),
                ("accepted loops", loops.to_string()),
                ("output", out.display().to_string()),
            ])
        );
        Ok(())
    })
}
