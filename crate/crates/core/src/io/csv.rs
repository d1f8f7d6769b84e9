use std::fmt::Write as _;
use std::path::Path;

use super::atomic_write;
use crate::error::Result;

/// Small CSV table with a leading `#` comment line.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CsvTable {
    pub comment: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl CsvTable {
    pub fn new(comment: impl Into<String>, columns: &[&str]) -> Self {
        CsvTable {
            comment: comment.into(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    /// Appends a row; floats are written in shortest round-trip form.
    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        if !self.comment.is_empty() {
            let _ = writeln!(out, "# {}", self.comment);
        }
        let _ = writeln!(out, "{}", self.columns.join(","));
        for row in &self.rows {
            let _ = writeln!(out, "{}", row.join(","));
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        atomic_write(path, self.render().as_bytes())
    }

    /// Values of column `name` parsed as floats.
    pub fn column_f64(&self, name: &str) -> Option<Vec<f64>> {
        let c = self.columns.iter().position(|n| n == name)?;
        self.rows.iter().map(|r| r[c].parse().ok()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_comment_header_and_rows() {
        let mut t = CsvTable::new("HF grid, relative L2", &["time", "rel_l2"]);
        t.push(vec!["0".into(), 0.1.to_string()]);
        assert_eq!(t.render(), "# HF grid, relative L2\ntime,rel_l2\n0,0.1\n");
        assert_eq!(t.column_f64("rel_l2").unwrap(), vec![0.1]);
    }
}
