//! Header-first CSV input with row-level diagnostics.

use std::path::Path;

use crate::error::{Error, Result};

/// A CSV file held as text cells; columns are parsed on demand.
#[derive(Debug, Clone)]
pub struct Table {
    source: String,
    headers: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&path.display().to_string(), &text)
    }

    pub fn parse(source: &str, text: &str) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let headers: Vec<String> = reader
            .headers()
            .map_err(|e| Error::data(format!("{source}: unreadable header: {e}")))?
            .iter()
            .map(str::to_string)
            .collect();
        if headers.iter().all(String::is_empty) {
            return Err(Error::data(format!("{source}: missing header row")));
        }
        let mut rows = Vec::new();
        for rec in reader.records() {
            let rec = rec.map_err(|e| match e.position() {
                Some(p) => Error::data(format!("{source}: line {}: {e}", p.line())),
                None => Error::data(format!("{source}: {e}")),
            })?;
            rows.push(rec.iter().map(str::to_string).collect());
        }
        Ok(Self {
            source: source.to_string(),
            headers,
            rows,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn headers(&self) -> &[String] {
        &self.headers
    }

    pub fn has(&self, name: &str) -> bool {
        self.headers.iter().any(|h| h == name)
    }

    /// Parses one column as numbers; data row r is reported as line r + 2.
    pub fn column(&self, name: &str) -> Result<Vec<f64>> {
        let Some(j) = self.headers.iter().position(|h| h == name) else {
            return Err(Error::data(format!("{}: missing column '{name}'", self.source)));
        };
        self.rows
            .iter()
            .enumerate()
            .map(|(r, row)| {
                let cell = &row[j];
                match cell.parse::<f64>() {
                    Ok(v) if v.is_finite() => Ok(v),
                    _ => Err(Error::data(format!(
                        "{}: line {}, column '{name}': '{cell}' is not a finite number",
                        self.source,
                        r + 2
                    ))),
                }
            })
            .collect()
    }

    /// Covariate columns: `x`, or `x1`, `x2`, ... in header order.
    pub fn covariate_names(&self) -> Result<Vec<String>> {
        let names: Vec<String> = self
            .headers
            .iter()
            .filter(|h| {
                h.as_str() == "x" || h.strip_prefix('x').is_some_and(|d| !d.is_empty() && d.bytes().all(|b| b.is_ascii_digit()))
            })
            .cloned()
            .collect();
        if names.is_empty() {
            return Err(Error::data(format!("{}: missing column 'x'", self.source)));
        }
        Ok(names)
    }
}
