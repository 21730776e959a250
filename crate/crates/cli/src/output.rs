//! CSV artifacts. Every file starts with one `# diffsim <schema> v<N>`
//! comment line; the column order is fixed per schema version.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use crate::CliError;

pub const METRICS_SCHEMA: &str = "metrics v1";
pub const TIMING_SCHEMA: &str = "timing v1";
pub const EVAL_SCHEMA: &str = "eval v1";
pub const TRAJECTORY_SCHEMA: &str = "trajectory v1";
pub const SWEEP_SCHEMA: &str = "contact-sweep v1";
pub const STABILITY_SCHEMA: &str = "stability v1";
pub const GRADCHECK_SCHEMA: &str = "grad-check v1";

/// Opens `path`, writes the schema line plus any extra `# key: value`
/// comments, then returns a writer that has already emitted `header`.
pub fn csv_writer(
    path: &Path,
    schema: &str,
    comments: &[(String, String)],
    header: &[String],
) -> Result<csv::Writer<File>, CliError> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    let mut f = File::create(path)?;
    writeln!(f, "# diffsim {schema}")?;
    for (k, v) in comments {
        writeln!(f, "# {k}: {v}")?;
    }
    let mut w = csv::Writer::from_writer(f);
    w.write_record(header)?;
    w.flush()?;
    Ok(w)
}

/// Shortest round-trip decimal form of `x`.
pub fn num(x: f64) -> String {
    format!("{x}")
}

/// Header and rows of a CSV written by [`csv_writer`], comments skipped.
pub fn read_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>), CliError> {
    let mut r = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)?;
    let header = r.headers()?.iter().map(str::to_string).collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        rows.push(rec?.iter().map(str::to_string).collect());
    }
    Ok((header, rows))
}

/// Column `name` of `rows` parsed as floats; empty cells become `None`.
pub fn column(header: &[String], rows: &[Vec<String>], name: &str) -> Option<Vec<Option<f64>>> {
    let i = header.iter().position(|h| h == name)?;
    Some(rows.iter().map(|r| r.get(i).and_then(|c| c.parse().ok())).collect())
}
