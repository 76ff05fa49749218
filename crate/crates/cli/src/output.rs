//! Trajectory CSVs and JSON reports.

use std::fs;
use std::io::Write;
use std::path::Path;

use nambu_core::dynamics::Trajectory;
use serde::Serialize;

use crate::error::CliError;

/// Column-named numeric table, one row per kept state.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    /// `t`, the state coordinates, every diagnostic, then `det_M` when the
    /// tangent flow was integrated.
    pub fn from_trajectory(traj: &Trajectory, names: &[String], every: usize) -> Self {
        let mut columns = vec!["t".to_string()];
        columns.extend(names.iter().cloned());
        columns.extend(traj.diagnostics.iter().map(|(n, _)| n.clone()));
        if traj.volume.is_some() {
            columns.push("det_M".into());
        }
        let every = every.max(1);
        let last = traj.len().saturating_sub(1);
        let rows = (0..traj.len())
            .filter(|i| i % every == 0 || *i == last)
            .map(|i| {
                let mut row = vec![traj.times[i]];
                row.extend_from_slice(traj.state(i));
                row.extend(traj.diagnostics.iter().map(|(_, s)| s[i]));
                if let Some(v) = &traj.volume {
                    row.push(v[i]);
                }
                row
            })
            .collect();
        Table { columns, rows }
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[i]).collect())
    }

    pub fn write_csv(&self, path: &Path) -> Result<(), CliError> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(&self.columns)?;
        for row in &self.rows {
            w.write_record(row.iter().map(|v| format!("{v:.16e}")))?;
        }
        w.flush().map_err(|e| CliError::io(path, e))?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Self, CliError> {
        let mut r = csv::Reader::from_path(path)?;
        let columns: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
        let mut rows = Vec::new();
        for (line, rec) in r.records().enumerate() {
            let rec = rec?;
            let row = rec
                .iter()
                .map(|s| {
                    s.trim().parse::<f64>().map_err(|_| {
                        CliError::Scenario(format!("{}: row {}: `{s}` is not a number", path.display(), line + 1))
                    })
                })
                .collect::<Result<Vec<_>, _>>()?;
            rows.push(row);
        }
        Ok(Table { columns, rows })
    }
}

/// Pretty JSON with a trailing newline. Object keys of `serde_json::Value`
/// are sorted, so equal reports serialize to equal bytes.
pub fn write_json(path: &Path, report: &impl Serialize) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(report).map_err(|e| CliError::Scenario(e.to_string()))?;
    text.push('\n');
    let mut f = fs::File::create(path).map_err(|e| CliError::io(path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| CliError::io(path, e))
}

pub fn read_json(path: &Path) -> Result<serde_json::Value, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Json {
        path: path.to_path_buf(),
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        let t = Table {
            columns: vec!["t".into(), "x".into()],
            rows: vec![vec![0.0, 0.1], vec![1e-3, -1.0 / 3.0], vec![2e-3, f64::MIN_POSITIVE]],
        };
        t.write_csv(&path).unwrap();
        let back = Table::read_csv(&path).unwrap();
        assert_eq!(back, t);
        assert_eq!(back.column("x").unwrap()[1].to_bits(), (-1.0f64 / 3.0).to_bits());
    }

    #[test]
    fn non_numeric_cell() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        fs::write(&path, "t,x\n0,abc\n").unwrap();
        assert!(Table::read_csv(&path).is_err());
    }
}
