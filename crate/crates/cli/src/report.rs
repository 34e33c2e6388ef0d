use std::fs::File;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use csviu_core::{CsviuError, Result};
use serde::Serialize;

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Provenance header embedded in every report.
#[derive(Clone, Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub model_path: PathBuf,
    pub config: serde_json::Value,
    pub output_dir: PathBuf,
    pub timestamp: String,
    pub tool_version: &'static str,
}

impl RunManifest {
    pub fn new(command: &str, model_path: &Path, config: serde_json::Value, out: Option<&Path>) -> Self {
        let output_dir = match out.and_then(Path::parent) {
            Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
            _ => PathBuf::from("."),
        };
        RunManifest {
            command: command.to_string(),
            model_path: model_path.to_path_buf(),
            config,
            output_dir,
            timestamp: timestamp(),
            tool_version: TOOL_VERSION,
        }
    }
}

/// UTC time of the run, pinned by `SOURCE_DATE_EPOCH` when set.
fn timestamp() -> String {
    let pinned = std::env::var("SOURCE_DATE_EPOCH")
        .ok()
        .and_then(|s| s.trim().parse::<i64>().ok())
        .and_then(|secs| DateTime::<Utc>::from_timestamp(secs, 0));
    pinned.unwrap_or_else(Utc::now).format("%Y-%m-%dT%H:%M:%SZ").to_string()
}

fn sink(out: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match out {
        Some(p) => Box::new(io::BufWriter::new(File::create(p)?)),
        None => Box::new(io::stdout().lock()),
    })
}

#[derive(Serialize)]
struct WithManifest<'a, T: Serialize> {
    manifest: &'a RunManifest,
    #[serde(flatten)]
    body: &'a T,
}

pub fn emit_json<T: Serialize>(manifest: &RunManifest, body: &T, out: Option<&Path>) -> Result<()> {
    let text = serde_json::to_string_pretty(&WithManifest { manifest, body })
        .map_err(|e| CsviuError::InternalInconsistency(format!("report serialization: {e}")))?;
    let mut w = sink(out)?;
    writeln!(w, "{text}")?;
    w.flush()?;
    Ok(())
}

/// Writes `# manifest {...}` followed by the CSV records.
pub fn write_manifest_line<W: Write>(w: &mut W, manifest: &RunManifest) -> Result<()> {
    let line = serde_json::to_string(manifest)
        .map_err(|e| CsviuError::InternalInconsistency(format!("manifest serialization: {e}")))?;
    writeln!(w, "# manifest {line}")?;
    Ok(())
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn emit_csv(
    manifest: &RunManifest,
    header: &[&str],
    rows: &[Vec<Option<f64>>],
    out: Option<&Path>,
) -> Result<()> {
    let mut w = sink(out)?;
    write_manifest_line(&mut w, manifest)?;
    let mut csv = csv::Writer::from_writer(w);
    let csv_err = |e: csv::Error| CsviuError::Io(io::Error::other(e));
    csv.write_record(header).map_err(csv_err)?;
    for row in rows {
        csv.write_record(row.iter().map(|v| cell(*v))).map_err(csv_err)?;
    }
    csv.flush()?;
    Ok(())
}
