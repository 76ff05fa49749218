//! Plain-text summaries of reports and trajectory tables.

use std::fmt::Write;
use std::path::Path;

use serde_json::Value;

use crate::error::CliError;
use crate::output::{read_json, Table};

fn flatten(prefix: &str, v: &Value, out: &mut Vec<(String, String)>) {
    match v {
        Value::Object(map) => {
            for (k, child) in map {
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                flatten(&key, child, out);
            }
        }
        Value::Array(items) if items.iter().any(|i| i.is_object()) => {
            for (i, child) in items.iter().enumerate() {
                flatten(&format!("{prefix}[{i}]"), child, out);
            }
        }
        other => out.push((prefix.to_string(), other.to_string())),
    }
}

/// `key = value` lines for a JSON report, or the shape and last row of a
/// CSV table.
pub fn summarize(path: &Path) -> Result<String, CliError> {
    let mut s = String::new();
    writeln!(s, "{}", path.display()).unwrap();
    if path.extension().is_some_and(|e| e == "csv") {
        let t = Table::read_csv(path)?;
        writeln!(s, "  {} rows, columns: {}", t.rows.len(), t.columns.join(", ")).unwrap();
        if let Some(last) = t.rows.last() {
            for (c, v) in t.columns.iter().zip(last) {
                writeln!(s, "  last {c} = {v:.16e}").unwrap();
            }
        }
    } else {
        let mut lines = Vec::new();
        flatten("", &read_json(path)?, &mut lines);
        let width = lines.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
        for (k, v) in lines {
            writeln!(s, "  {k:width$} = {v}").unwrap();
        }
    }
    Ok(s)
}
