use std::io::Write;
use std::path::Path;

use serde_json::Value;

use crate::config::Format;
use crate::Failure;

/// Result of a command in both output shapes.
pub struct Table {
    pub json: Value,
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(json: Value, header: Vec<&'static str>) -> Self {
        Table { json, header, rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        self.rows.push(row);
    }

    pub fn render(&self, format: Format) -> Result<Vec<u8>, Failure> {
        match format {
            Format::Json => {
                // serde_json keeps object keys sorted, so this is canonical
                let mut out = serde_json::to_vec_pretty(&self.json).map_err(|e| Failure::Compute(e.to_string()))?;
                out.push(b'\n');
                Ok(out)
            }
            Format::Csv => {
                let mut w = csv::Writer::from_writer(Vec::new());
                let io = |e: csv::Error| Failure::Compute(e.to_string());
                w.write_record(&self.header).map_err(io)?;
                for r in &self.rows {
                    w.write_record(r).map_err(io)?;
                }
                w.into_inner().map_err(|e| Failure::Compute(e.to_string()))
            }
        }
    }
}

pub fn emit(bytes: &[u8], path: Option<&Path>) -> Result<(), Failure> {
    match path {
        Some(p) => std::fs::write(p, bytes).map_err(|e| Failure::Compute(format!("{}: {e}", p.display()))),
        None => std::io::stdout().write_all(bytes).map_err(|e| Failure::Compute(e.to_string())),
    }
}

pub fn join<T: ToString>(xs: &[T]) -> String {
    xs.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}
