//! Shared plumbing for the command-line tools: config loading with flag
//! overrides, the global thread cap and exit codes.

use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::Args;
use lt_core::config::Config;
use lt_core::error::{Error, Result};

/// Exit status for a processing failure.
pub const EXIT_FAILURE: u8 = 1;
/// Exit status for a usage or configuration error (clap uses the same).
pub const EXIT_USAGE: u8 = 2;

#[derive(Args, Clone, Debug, Default)]
pub struct Common {
    /// `key: value` configuration file; flags override its keys.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Cap on worker threads (default: all cores).
    #[arg(long, global = true, value_name = "N")]
    pub threads: Option<usize>,
}

impl Common {
    /// Reads the config file, if any, and applies `overrides` whose value is set.
    pub fn load(&self, overrides: &[(&str, Option<String>)]) -> Result<Config> {
        let mut cfg = match &self.config {
            Some(path) => Config::read(path).map_err(as_config_error)?,
            None => Config::new("command line"),
        };
        if let Some(n) = self.threads {
            cfg.set("threads", n.to_string());
        }
        for (key, value) in overrides {
            if let Some(v) = value {
                cfg.set(key, v.clone());
            }
        }
        init_threads(&cfg)?;
        Ok(cfg)
    }
}

/// Any failure to read or parse the config file is a usage error.
fn as_config_error(e: Error) -> Error {
    match e {
        Error::Config(_) => e,
        other => Error::Config(other.to_string()),
    }
}

/// Builds the global rayon pool from the `threads` key.
pub fn init_threads(cfg: &Config) -> Result<()> {
    let Some(n) = cfg.get::<usize>("threads")? else {
        return Ok(());
    };
    if n == 0 {
        return Err(Error::Config("threads must be at least 1".into()));
    }
    // a second initialisation in the same process keeps the first pool
    let _ = rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global();
    Ok(())
}

pub fn opt<T: Display>(v: &Option<T>) -> Option<String> {
    v.as_ref().map(ToString::to_string)
}

pub fn opt_path(v: &Option<PathBuf>) -> Option<String> {
    v.as_ref().map(|p| p.display().to_string())
}

pub fn path(cfg: &Config, key: &str) -> Result<PathBuf> {
    Ok(PathBuf::from(cfg.require_str(key)?))
}

/// A required input file; a missing one is a usage error naming the path.
pub fn input_file(cfg: &Config, key: &str) -> Result<PathBuf> {
    let p = path(cfg, key)?;
    if p.is_file() {
        Ok(p)
    } else {
        Err(Error::Config(format!(
            "{key} file not found: {}",
            p.display()
        )))
    }
}

/// A required input directory; a missing one is a usage error naming the path.
pub fn input_dir(cfg: &Config, key: &str) -> Result<PathBuf> {
    let p = path(cfg, key)?;
    lt_core::pipeline::require_dir(&p, key)?;
    Ok(p)
}

pub fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) => EXIT_USAGE,
        _ => EXIT_FAILURE,
    }
}

/// Runs a tool body, printing any error to stderr with the tool name.
pub fn run(tool: &str, body: impl FnOnce() -> Result<()>) -> ExitCode {
    match body() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{tool}: error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

/// Writes `text` to `path`, creating parent directories.
pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Left-aligned two-column table for human summaries.
pub fn table(rows: &[(&str, String)]) -> String {
    let w = rows.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
    rows.iter()
        .map(|(k, v)| format!("  {k:<w$}  {v}\n"))
        .collect()
}
