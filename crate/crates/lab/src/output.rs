//! CSV tables and the on-disk artifact set of one run.
//!
//! Floats are written as `{:.16e}` (17 significant digits), which
//! round-trips every finite `f64` exactly. Lines end in `\n`.

use std::fs;
use std::path::{Path, PathBuf};

use meanfield_core::dynamics::TrajectoryRecord;
use meanfield_core::model::Ensemble;

use crate::error::{LabError, LabResult};

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Int(i64),
    Float(f64),
    Text(String),
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Float(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<u64> for Cell {
    fn from(v: u64) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Text(v)
    }
}

pub fn format_float(v: f64) -> String {
    if v.is_nan() {
        "NaN".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf" } else { "-inf" }.into()
    } else {
        format!("{v:.16e}")
    }
}

/// A named CSV file: header plus rows of equal width.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(name: impl Into<String>, columns: &[&str]) -> Self {
        Self { name: name.into(), columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(row.len(), self.columns.len(), "row width differs from header in {}", self.name);
        self.rows.push(row);
    }

    /// `step, t` followed by the record's own columns.
    pub fn from_record(name: impl Into<String>, record: &TrajectoryRecord) -> Self {
        let mut cols = vec!["step".to_string(), "t".to_string()];
        cols.extend(record.columns.iter().cloned());
        let rows = record
            .rows
            .iter()
            .map(|s| {
                let mut r = vec![Cell::from(s.step), Cell::from(s.time)];
                r.extend(s.values.iter().map(|v| Cell::Float(*v)));
                r
            })
            .collect();
        Self { name: name.into(), columns: cols, rows }
    }

    /// One particle per row: `a, w_1, …, w_d`.
    pub fn from_state(name: impl Into<String>, ens: &Ensemble) -> Self {
        let mut cols = vec!["a".to_string()];
        cols.extend((1..=ens.dim_w()).map(|k| format!("w_{k}")));
        let rows = (0..ens.len()).map(|i| ens.theta(i).iter().map(|v| Cell::Float(*v)).collect()).collect();
        Self { name: name.into(), columns: cols, rows }
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
        w.write_record(&self.columns).expect("in-memory write");
        for row in &self.rows {
            w.write_record(row.iter().map(|cell| match cell {
                Cell::Int(v) => v.to_string(),
                Cell::Float(v) => format_float(*v),
                Cell::Text(v) => v.clone(),
            }))
            .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("cells are UTF-8")
    }
}

/// Everything a successful run leaves on disk.
#[derive(Debug, Clone)]
pub struct Artifacts {
    pub config_echo: String,
    pub provenance: String,
    pub tables: Vec<Table>,
}

pub const CONFIG_ECHO: &str = "config.json";
pub const PROVENANCE: &str = "provenance.json";

fn write(path: &Path, contents: &str) -> LabResult<()> {
    fs::write(path, contents).map_err(|e| LabError::io(path, e))
}

impl Artifacts {
    /// Writes every file into `dir` (created if missing) and returns the
    /// paths in write order. Runs finish computing before anything is
    /// written, so a numerical failure never leaves a partial set.
    pub fn write_to(&self, dir: &Path) -> LabResult<Vec<PathBuf>> {
        fs::create_dir_all(dir).map_err(|e| LabError::io(dir, e))?;
        let mut written = Vec::new();
        for (name, body) in [(CONFIG_ECHO, &self.config_echo), (PROVENANCE, &self.provenance)] {
            let p = dir.join(name);
            write(&p, body)?;
            written.push(p);
        }
        for t in &self.tables {
            let p = dir.join(format!("{}.csv", t.name));
            write(&p, &t.to_csv())?;
            written.push(p);
        }
        Ok(written)
    }
}

/// Header and rows of a CSV produced by [`Table::to_csv`].
pub fn read_csv(text: &str) -> LabResult<(Vec<String>, Vec<Vec<String>>)> {
    let bad = |e: csv::Error| LabError::config(format!("malformed CSV: {e}"));
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let header = r.headers().map_err(bad)?.iter().map(String::from).collect();
    let rows = r
        .records()
        .map(|rec| rec.map(|rec| rec.iter().map(String::from).collect()).map_err(bad))
        .collect::<LabResult<_>>()?;
    Ok((header, rows))
}
