//! ltslam, ltremovert and ltmap end to end over a central session and queries.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use lt_cli::{opt_path, run, table, Common};
use lt_core::error::Error;
use lt_core::pipeline::{run_pipeline, PipelineConfig};

/// Writes `aligned/`, `removert/<a>_<b>/` and `map/{live,meta}/` under `out`.
/// Re-runs replace earlier outputs; a failed stage leaves no partial output.
#[derive(Parser)]
#[command(name = "ltpipeline", version, about)]
struct Cli {
    #[command(flatten)]
    common: Common,
    /// Central session directory (`central` key).
    #[arg(long)]
    central: Option<PathBuf>,
    /// Query session directories in visit order (`query` key, comma separated).
    #[arg(long, num_args = 1.., value_delimiter = ',')]
    query: Vec<PathBuf>,
    /// Output directory (`out` key).
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    run("ltpipeline", || {
        let queries = (!cli.query.is_empty()).then(|| {
            cli.query
                .iter()
                .map(|p| p.display().to_string())
                .collect::<Vec<_>>()
                .join(",")
        });
        let cfg = cli.common.load(&[
            ("central", opt_path(&cli.central)),
            ("query", queries),
            ("out", opt_path(&cli.out)),
        ])?;
        let pc = PipelineConfig::from_config(&cfg)?;
        let summary = run_pipeline(&pc).map_err(|e| match e.source {
            Error::Config(msg) => Error::Config(format!("stage {}: {msg}", e.stage)),
            other => Error::Invalid(format!("stage {}: {other}", e.stage)),
        })?;
        let ids: Vec<String> = summary.sessions.iter().map(u32::to_string).collect();
        print!(
            "{}",
            table(&[
                ("sessions", ids.join(", ")),
                ("live head", summary.live_head.to_string()),
                ("meta head", summary.meta_head.to_string()),
                ("output", pc.out.display().to_string()),
            ])
        );
        Ok(())
    })
}
