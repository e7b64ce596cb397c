//! CSV emission. Every file gets a header; floats are written in
//! scientific notation with 17 significant digits so they round-trip.

use std::fs;
use std::path::Path;

use crate::error::{CliError, Result};

/// Locale-independent, round-trippable float formatting.
pub fn num(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else if x.is_nan() {
        "nan".into()
    } else if x > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

/// Buffered rows for one output file, flushed by a single writer.
pub struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: AsRef<str>>(header: &[S]) -> Self {
        Self {
            header: header.iter().map(|s| s.as_ref().to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        }
        let mut w = csv::Writer::from_path(path).map_err(|e| CliError::csv(path, e))?;
        w.write_record(&self.header).map_err(|e| CliError::csv(path, e))?;
        for row in &self.rows {
            w.write_record(row).map_err(|e| CliError::csv(path, e))?;
        }
        w.flush().map_err(|e| CliError::io(path, e))
    }
}

/// Reads a CSV into its header and string records.
pub fn read_table(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let mut r = csv::Reader::from_path(path).map_err(|e| CliError::csv(path, e))?;
    let header = r
        .headers()
        .map_err(|e| CliError::csv(path, e))?
        .iter()
        .map(str::to_string)
        .collect();
    let rows = r
        .records()
        .map(|rec| rec.map(|r| r.iter().map(str::to_string).collect()))
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| CliError::csv(path, e))?;
    Ok((header, rows))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_round_trip_bitwise() {
        for x in [0.1, -1.0 / 3.0, 1e-300, 6.02214076e23, f64::MIN_POSITIVE, 0.0] {
            let s = num(x);
            assert_eq!(s.parse::<f64>().unwrap().to_bits(), x.to_bits(), "{s}");
        }
        assert_eq!(num(1.0), "1.0000000000000000e0");
        assert_eq!(num(f64::NAN), "nan");
    }

    #[test]
    fn tables_always_carry_a_header() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sub/empty.csv");
        Table::new(&["a", "b"]).write(&path).unwrap();
        let (h, rows) = read_table(&path).unwrap();
        assert_eq!(h, ["a", "b"]);
        assert!(rows.is_empty());
    }
}
