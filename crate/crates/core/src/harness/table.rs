use std::fmt;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

/// A small CSV table. Numbers are stored in their shortest round-trip form.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Self {
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Result<usize> {
        self.columns
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| Error::MalformedRun(format!("summary has no column {name:?}")))
    }

    pub fn text_column(&self, name: &str) -> Result<Vec<&str>> {
        let j = self.column(name)?;
        Ok(self.rows.iter().map(|r| r[j].as_str()).collect())
    }

    /// Parses a numeric column; blank cells become NaN.
    pub fn f64_column(&self, name: &str) -> Result<Vec<f64>> {
        let j = self.column(name)?;
        self.rows
            .iter()
            .map(|r| {
                if r[j].is_empty() {
                    return Ok(f64::NAN);
                }
                r[j].parse()
                    .map_err(|_| Error::MalformedRun(format!("{name}: not a number: {:?}", r[j])))
            })
            .collect()
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{}", self.columns.join(","))?;
        for r in &self.rows {
            writeln!(w, "{}", r.join(","))?;
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        std::fs::write(path, buf)?;
        Ok(())
    }
}

impl fmt::Display for Table {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let widths: Vec<usize> = (0..self.columns.len())
            .map(|j| {
                self.rows
                    .iter()
                    .map(|r| r[j].len())
                    .chain([self.columns[j].len()])
                    .max()
                    .unwrap_or(0)
            })
            .collect();
        let line = |cells: &[String]| {
            cells
                .iter()
                .zip(&widths)
                .map(|(c, w)| format!("{c:>w$}"))
                .collect::<Vec<_>>()
                .join("  ")
        };
        writeln!(f, "{}", line(&self.columns))?;
        for r in &self.rows {
            writeln!(f, "{}", line(r))?;
        }
        Ok(())
    }
}

pub(crate) fn num(x: f64) -> String {
    format!("{x}")
}
