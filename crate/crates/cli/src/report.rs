//! CSV and JSON writers.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::CliError;
use crate::sweep::Row;

pub const CSV_HEADER: [&str; 6] = ["k", "strike", "iv_asymptotic", "iv_oracle", "abs_error", "source"];

fn out_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Output(format!("{}: {e}", path.display()))
}

fn field(v: Option<f64>) -> String {
    v.map(|x| format!("{x:e}")).unwrap_or_default()
}

pub fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| out_err(dir, e))
}

pub fn write_csv(path: &Path, rows: &[Row]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| out_err(path, e))?;
    w.write_record(CSV_HEADER).map_err(|e| out_err(path, e))?;
    for r in rows {
        w.write_record([
            format!("{}", r.k),
            format!("{:e}", r.strike),
            field(r.iv_asymptotic),
            field(r.iv_oracle),
            field(r.abs_error),
            r.source.clone(),
        ])
        .map_err(|e| out_err(path, e))?;
    }
    w.flush().map_err(|e| out_err(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let file = File::create(path).map_err(|e| out_err(path, e))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| out_err(path, e))?;
    writeln!(w).and_then(|_| w.flush()).map_err(|e| out_err(path, e))
}

pub fn output_path(dir: &Path, stem: &str, command: &str, ext: &str) -> PathBuf {
    dir.join(format!("{stem}-{command}.{ext}"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_has_stable_header_and_empty_fields() {
        let dir = tempfile::tempdir().unwrap();
        let path = output_path(dir.path(), "run", "leftwing", "csv");
        let rows = [Row {
            k: 2.0,
            strike: (-2.0f64).exp(),
            iv_asymptotic: Some(0.25),
            iv_oracle: None,
            abs_error: None,
            source: "asymptotic-leftwing".into(),
        }];
        write_csv(&path, &rows).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), CSV_HEADER.join(","));
        assert!(lines.next().unwrap().ends_with(",2.5e-1,,,asymptotic-leftwing"));
    }

    #[test]
    fn floats_round_trip() {
        let x = 0.1 + 0.2;
        assert_eq!(field(Some(x)).parse::<f64>().unwrap(), x);
        assert_eq!(field(None), "");
    }
}
