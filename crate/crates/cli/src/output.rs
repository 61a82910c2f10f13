//! Trace CSV rendering and atomic file writes.

use std::io::Write;
use std::path::Path;

use inclusion_accel::IterateRecord;

use crate::CliError;

pub const TRACE_HEADER: &str = "k,cert_residual,natural_residual,potential,descent_slack,distance_to_solution";

fn cell(x: Option<f64>) -> String {
    x.map(|v| format!("{v:.16e}")).unwrap_or_default()
}

/// One header line plus one row per record; absent values are empty cells.
pub fn render_trace(records: &[IterateRecord]) -> String {
    let mut out = String::with_capacity(64 * (records.len() + 1));
    out.push_str(TRACE_HEADER);
    out.push('\n');
    for r in records {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.k,
            cell(Some(r.cert_residual)),
            cell(Some(r.natural_residual)),
            cell(r.potential),
            cell(r.descent_slack),
            cell(r.distance_to_solution),
        ));
    }
    out
}

/// Writes through a temporary file in the target directory, then renames.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<(), CliError> {
    let io = |e: std::io::Error| CliError::Io(format!("{}: {e}", path.display()));
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir).map_err(io)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io)?;
    tmp.write_all(contents).map_err(io)?;
    tmp.as_file().sync_all().map_err(io)?;
    tmp.persist(path).map_err(|e| io(e.error))?;
    Ok(())
}
