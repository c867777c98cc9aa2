//! Atomic output emission: data file, optional aggregate file, and the
//! `<path>.meta.json` sidecar.
//!
//! Data files are byte-reproducible for identical configs and seeds, so
//! timestamps live only in the sidecar. Every file is written to a
//! `.partial` sibling first and renamed into place; an interrupted or
//! failed write never leaves partial content under the final name.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};

use crate::records::Table;

/// Output format for data and aggregate files.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

impl std::str::FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            other => Err(format!("unknown format `{other}` (expected csv or json)")),
        }
    }
}

impl std::fmt::Display for Format {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Format::Csv => "csv",
            Format::Json => "json",
        })
    }
}

/// Everything the sidecar records about a run.
#[derive(Debug)]
pub struct Meta {
    pub subcommand: &'static str,
    /// Resolved configuration, echoed field by field in definition order.
    pub config: Vec<(String, String)>,
    pub started_unix_ms: u128,
    pub finished_unix_ms: u128,
}

/// Milliseconds since the UNIX epoch, for the sidecar only.
pub fn now_unix_ms() -> u128 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis())
        .unwrap_or(0)
}

fn render_meta(meta: &Meta) -> String {
    let mut out = String::from("{\n");
    let _ = writeln!(out, "  \"subcommand\": \"{}\",", meta.subcommand);
    out.push_str("  \"config\": {\n");
    for (i, (key, value)) in meta.config.iter().enumerate() {
        let comma = if i + 1 < meta.config.len() { "," } else { "" };
        let _ = writeln!(
            out,
            "    \"{}\": \"{}\"{comma}",
            crate::records::json_escape(key),
            crate::records::json_escape(value)
        );
    }
    out.push_str("  },\n");
    let _ = writeln!(
        out,
        "  \"rng_algorithm\": \"{}\",",
        mvngrad_core::rng::RNG_ALGORITHM
    );
    let _ = writeln!(
        out,
        "  \"artifact_version\": \"{}\",",
        env!("CARGO_PKG_VERSION")
    );
    let _ = writeln!(out, "  \"started_unix_ms\": {},", meta.started_unix_ms);
    let _ = writeln!(out, "  \"finished_unix_ms\": {}", meta.finished_unix_ms);
    out.push_str("}\n");
    out
}

/// Writes `bytes` to `<path>.partial`, then renames over `path`. On any
/// failure the partial is removed and the final name is untouched.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut partial = path.as_os_str().to_owned();
    partial.push(".partial");
    let partial = PathBuf::from(partial);
    let write_then_rename = (|| {
        std::fs::write(&partial, bytes)?;
        std::fs::rename(&partial, path)
    })();
    if write_then_rename.is_err() {
        let _ = std::fs::remove_file(&partial);
    }
    write_then_rename.with_context(|| format!("writing {}", path.display()))
}

/// Derives the `--aggregate` output path: `runs/spike.csv` becomes
/// `runs/spike.agg.csv`; extensionless paths get `.agg` appended.
pub fn aggregate_path(path: &Path) -> PathBuf {
    match (path.file_stem(), path.extension()) {
        (Some(stem), Some(ext)) => {
            let mut name = stem.to_owned();
            name.push(".agg.");
            name.push(ext);
            path.with_file_name(name)
        }
        _ => {
            let mut name = path.as_os_str().to_owned();
            name.push(".agg");
            PathBuf::from(name)
        }
    }
}

/// Sidecar path: the final data path plus `.meta.json`.
pub fn meta_path(path: &Path) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(".meta.json");
    PathBuf::from(name)
}

/// Writes the data file, the optional aggregate file, and the sidecar.
pub fn emit(
    table: &Table,
    meta: &Meta,
    path: &Path,
    format: Format,
    aggregate: bool,
) -> Result<()> {
    let render = |t: &Table| match format {
        Format::Csv => t.to_csv(),
        Format::Json => t.to_json(),
    };
    write_atomic(path, render(table).as_bytes())?;
    if aggregate {
        write_atomic(&aggregate_path(path), render(&table.aggregate()).as_bytes())?;
    }
    write_atomic(&meta_path(path), render_meta(meta).as_bytes())?;
    Ok(())
}
