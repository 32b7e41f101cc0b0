use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::trainers::TracePoint;

/// Writes through a temporary file in the same directory, then renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

pub(crate) fn fmt_f(x: f64) -> String {
    format!("{x}")
}

pub(crate) fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_f).unwrap_or_default()
}

/// CSV text from a header and rows.
pub(crate) fn csv_text(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<String> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    let io = |e: csv::Error| Error::Io(std::io::Error::other(e));
    w.write_record(header).map_err(io)?;
    for r in rows {
        w.write_record(&r).map_err(io)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(std::io::Error::other(e.to_string())))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Two long-format tables, `(round, iter, grad_sq_norm)` and `(round, iter, forecast_error)`,
/// in chronological order.
pub fn emit_plot_data(traces: &[TracePoint]) -> Result<(String, String)> {
    if traces.is_empty() {
        return Err(Error::NoTraces);
    }
    let grad = csv_text(
        &["round", "iter", "grad_sq_norm"],
        traces
            .iter()
            .map(|p| vec![p.round.to_string(), p.iter.to_string(), fmt_f(p.grad_sq_norm)]),
    )?;
    let forecast = csv_text(
        &["round", "iter", "forecast_error"],
        traces
            .iter()
            .map(|p| vec![p.round.to_string(), p.iter.to_string(), fmt_opt(p.forecast_error)]),
    )?;
    Ok((grad, forecast))
}
