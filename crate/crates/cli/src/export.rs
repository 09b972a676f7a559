use std::path::{Path, PathBuf};

use crate::registry::{RunRecord, Status, TableKind, RECORD_FILE};
use crate::{CliError, Result};

/// Writes one CSV per table kind found among `ids` into `dest`.
///
/// Rows are methods in first-seen order and columns are runs, so several
/// seeds of one experiment sit side by side. Values are copied from the
/// run records unchanged. Nothing is written unless every id resolves to
/// a completed run.
pub fn export_tables(root: &Path, ids: &[String], dest: &Path) -> Result<Vec<PathBuf>> {
    if ids.is_empty() {
        return Err(CliError::Usage("export-tables needs at least one run id".into()));
    }
    let missing: Vec<String> = ids.iter().filter(|id| !root.join(id).join(RECORD_FILE).is_file()).cloned().collect();
    if !missing.is_empty() {
        return Err(CliError::MissingRuns(missing));
    }
    let records = ids.iter().map(|id| RunRecord::load(root, id)).collect::<Result<Vec<_>>>()?;
    if let Some(r) = records.iter().find(|r| r.status != Status::Complete) {
        return Err(CliError::Incomplete(r.run_id.clone()));
    }

    let mut written = Vec::new();
    for kind in TableKind::ALL {
        let runs: Vec<&RunRecord> = records.iter().filter(|r| r.table == Some(kind)).collect();
        if runs.is_empty() {
            continue;
        }
        std::fs::create_dir_all(dest)?;
        let path = dest.join(kind.file_name());
        std::fs::write(&path, render(&runs))?;
        written.push(path);
    }
    if written.is_empty() {
        return Err(CliError::Usage("none of the runs produced a table".into()));
    }
    Ok(written)
}

fn render(runs: &[&RunRecord]) -> String {
    let mut methods: Vec<&str> = Vec::new();
    for r in runs {
        for row in &r.rows {
            if !methods.contains(&row.method.as_str()) {
                methods.push(&row.method);
            }
        }
    }
    let mut out = String::from("method");
    for r in runs {
        out.push_str(&format!(",{}", r.run_id));
    }
    out.push('\n');
    for m in methods {
        out.push_str(m);
        for r in runs {
            out.push(',');
            if let Some(row) = r.rows.iter().find(|row| row.method == m) {
                out.push_str(&row.error.to_string());
            }
        }
        out.push('\n');
    }
    out
}
