//! CSV tables and the run manifest.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{io_error, CliResult};

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Text(String),
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Text(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

/// 17 significant digits, locale-free.
pub fn format_number(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else if v.is_nan() {
        "nan".into()
    } else if v > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Num(v) => format_number(*v),
            Cell::Text(s) => s.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub file: String,
    pub comment: String,
    pub header: &'static [&'static str],
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(file: impl Into<String>, comment: impl Into<String>, header: &'static [&'static str]) -> Self {
        Self {
            file: file.into(),
            comment: comment.into(),
            header,
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn write(&self, dir: &Path) -> CliResult<()> {
        let path = dir.join(&self.file);
        let mut file = BufWriter::new(File::create(&path).map_err(io_error(&path))?);
        writeln!(file, "# {}", self.comment).map_err(io_error(&path))?;
        let mut w = csv::Writer::from_writer(file);
        w.write_record(self.header)?;
        for row in &self.rows {
            w.write_record(row.iter().map(Cell::render))?;
        }
        w.flush().map_err(io_error(&path))?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Status {
    Complete,
    Partial(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub name: String,
    pub fields: Vec<(String, String)>,
    pub status: Status,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Manifest {
    pub header: Vec<(String, String)>,
    pub entries: Vec<ManifestEntry>,
}

impl Manifest {
    /// Same `key = value` layout as spec files. Only the `created_unix` line
    /// differs between two runs of one spec.
    pub fn write(&self, path: &Path) -> CliResult<()> {
        let mut out = String::from("# qsdlab run manifest\n");
        let created = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        out.push_str(&format!("created_unix = {created}\n"));
        for (k, v) in &self.header {
            out.push_str(&format!("{k} = {v}\n"));
        }
        for e in &self.entries {
            out.push_str(&format!("\n[{}]\n", e.name));
            for (k, v) in &e.fields {
                out.push_str(&format!("{k} = {v}\n"));
            }
            match &e.status {
                Status::Complete => out.push_str("status = complete\n"),
                Status::Partial(msg) => out.push_str(&format!("status = partial\nerror = {msg}\n")),
            }
        }
        std::fs::write(path, out).map_err(io_error(path))
    }
}
