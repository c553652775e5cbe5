//! HD removal and LD change detection between two aligned sessions.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use lt_cli::{input_dir, opt_path, path, run, table, Common};
use lt_core::ltslam::SlamParams;
use lt_core::pipeline::run_ltremovert;
use lt_core::settings::{keys, removert_params, REMOVERT_KEYS, SENSOR_KEYS};

/// Writes per-keyframe `nd_strong/`, `nd_weak/`, `pd_strong/`, `pd_weak/`
/// (world frame) and `scans_clean/` (keyframe frame) under `out`.
#[derive(Parser)]
#[command(name = "ltremovert", version, about)]
struct Cli {
    #[command(flatten)]
    common: Common,
    /// Aligned central session directory (`central` key).
    #[arg(long)]
    central: Option<PathBuf>,
    /// Aligned query session directory (`query` key).
    #[arg(long)]
    query: Option<PathBuf>,
    /// Output directory (`out` key).
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    run("ltremovert", || {
        let cfg = cli.common.load(&[
            ("central", opt_path(&cli.central)),
            ("query", opt_path(&cli.query)),
            ("out", opt_path(&cli.out)),
        ])?;
        cfg.validate(
            &keys(&[SENSOR_KEYS, REMOVERT_KEYS], &["threads"]),
            &["central", "query", "out"],
        )?;
        let params = removert_params(&cfg)?;
        let (central, query, out) = (
            input_dir(&cfg, "central")?,
            input_dir(&cfg, "query")?,
            path(&cfg, "out")?,
        );
        let ld = run_ltremovert(&central, &query, &out, &params, &SlamParams::default())?;
        let strong = |m: &[bool]| m.iter().filter(|&&s| s).count();
        print!(
            "{}",
            table(&[
                (
                    "nd strong / weak",
                    format!(
                        "{} / {}",
                        strong(&ld.nd_strong_mask),
                        ld.nd_raw.len() - strong(&ld.nd_strong_mask)
                    )
                ),
                (
                    "pd strong / weak",
                    format!(
                        "{} / {}",
                        strong(&ld.pd_strong_mask),
                        ld.pd_raw.len() - strong(&ld.pd_strong_mask)
                    )
                ),
                ("output", out.display().to_string()),
            ])
        );
        Ok(())
    })
}
