//! CSV serialization for experiment outputs.
//!
//! The tables written here hold only numbers, short identifiers, and
//! booleans — never free text — so no quoting or escaping is involved and
//! the format stays trivially diffable. Floats are written with 17
//! significant digits, enough to round-trip `f64` exactly, making output
//! files byte-comparable across runs and thread counts.

use std::fs;
use std::path::Path;

use crate::domain::fmt_f64;
use crate::experiments::ExperimentError;

/// Formats a float with enough digits to survive a parse round-trip.
pub fn fmt(v: f64) -> String {
    fmt_f64(v)
}

/// A parsed CSV table.
#[derive(Debug, Clone)]
pub struct Csv {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Csv {
    /// Index of a named column.
    pub fn column(&self, name: &str) -> Result<usize, ExperimentError> {
        self.header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| ExperimentError::Config(format!("missing CSV column {name:?}")))
    }

    /// All values of a named column parsed as floats.
    pub fn floats(&self, name: &str) -> Result<Vec<f64>, ExperimentError> {
        let idx = self.column(name)?;
        self.rows
            .iter()
            .map(|row| {
                row[idx].parse::<f64>().map_err(|_| {
                    ExperimentError::Config(format!(
                        "column {name:?} holds non-numeric value {:?}",
                        row[idx]
                    ))
                })
            })
            .collect()
    }

    /// All values of a named column as strings.
    pub fn strings(&self, name: &str) -> Result<Vec<String>, ExperimentError> {
        let idx = self.column(name)?;
        Ok(self.rows.iter().map(|row| row[idx].clone()).collect())
    }
}

/// Writes one CSV table; fields must not contain separators.
pub fn write_csv(
    path: &Path,
    header: &[&str],
    rows: &[Vec<String>],
) -> Result<(), ExperimentError> {
    let mut text = String::with_capacity(64 * (rows.len() + 1));
    text.push_str(&header.join(","));
    text.push('\n');
    for row in rows {
        debug_assert_eq!(row.len(), header.len(), "ragged CSV row");
        debug_assert!(
            row.iter().all(|f| !f.contains(',') && !f.contains('\n')),
            "CSV field needs quoting, which this writer does not do"
        );
        text.push_str(&row.join(","));
        text.push('\n');
    }
    fs::write(path, text)?;
    Ok(())
}

/// Reads a CSV table written by [`write_csv`].
pub fn read_csv(path: &Path) -> Result<Csv, ExperimentError> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header: Vec<String> = lines
        .next()
        .ok_or_else(|| ExperimentError::Config(format!("{} is empty", path.display())))?
        .split(',')
        .map(str::to_owned)
        .collect();
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let row: Vec<String> = line.split(',').map(str::to_owned).collect();
        if row.len() != header.len() {
            return Err(ExperimentError::Config(format!(
                "{} row {} has {} fields, expected {}",
                path.display(),
                i + 2,
                row.len(),
                header.len()
            )));
        }
        rows.push(row);
    }
    Ok(Csv { header, rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip_preserves_floats_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        let values = [1.0 / 3.0, -0.0, 1e-300, 6.02e23, f64::MIN_POSITIVE];
        let rows: Vec<Vec<String>> = values
            .iter()
            .enumerate()
            .map(|(i, &v)| vec![i.to_string(), fmt(v)])
            .collect();
        write_csv(&path, &["idx", "value"], &rows).unwrap();
        let table = read_csv(&path).unwrap();
        assert_eq!(table.header, vec!["idx", "value"]);
        let parsed = table.floats("value").unwrap();
        for (orig, got) in values.iter().zip(parsed) {
            assert_eq!(orig.to_bits(), got.to_bits());
        }
    }

    #[test]
    fn malformed_tables_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "a,b\n1,2,3\n").unwrap();
        assert!(matches!(read_csv(&path), Err(ExperimentError::Config(_))));
        let missing = read_csv(&dir.path().join("absent.csv"));
        assert!(matches!(missing, Err(ExperimentError::Io(_))));
    }

    #[test]
    fn column_lookup_errors_name_the_column() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        write_csv(&path, &["a"], &[vec!["1".into()]]).unwrap();
        let table = read_csv(&path).unwrap();
        assert!(table.column("a").is_ok());
        assert!(table.column("z").is_err());
        assert!(table.floats("a").is_ok());
    }
}
