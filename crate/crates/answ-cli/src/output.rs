//! Plain-text table rendering and the JSON report shapes.

use serde::Serialize;
use std::path::Path;

use crate::CliError;

/// Fixed-width text table: first column left-aligned, the rest right-aligned.
pub struct Table {
    headers: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(headers: &[&str]) -> Self {
        Self {
            headers: headers.iter().map(|h| h.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn row(&mut self, cells: Vec<String>) {
        debug_assert_eq!(cells.len(), self.headers.len());
        self.rows.push(cells);
    }

    pub fn print(&self) {
        let mut widths: Vec<usize> = self.headers.iter().map(String::len).collect();
        for row in &self.rows {
            for (i, cell) in row.iter().enumerate() {
                widths[i] = widths[i].max(cell.len());
            }
        }
        let render = |cells: &[String]| {
            let mut line = String::new();
            for (i, cell) in cells.iter().enumerate() {
                if i > 0 {
                    line.push_str("  ");
                }
                if i == 0 {
                    line.push_str(&format!("{cell:<width$}", width = widths[i]));
                } else {
                    line.push_str(&format!("{cell:>width$}", width = widths[i]));
                }
            }
            line.trim_end().to_string()
        };
        println!("{}", render(&self.headers));
        for row in &self.rows {
            println!("{}", render(row));
        }
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Input(format!("json serialization failed: {e}")))?;
    std::fs::write(path, text)?;
    Ok(())
}

#[derive(Serialize)]
pub struct StatsRow {
    pub layer: String,
    pub weights: u64,
    pub bins: usize,
    pub entropy_bits_per_weight: f64,
    pub entropy_mb: f64,
    pub quantized_mb: f64,
}

#[derive(Serialize)]
pub struct StatsReport {
    pub layers: Vec<StatsRow>,
    pub total_weights: u64,
    pub total_entropy_mb: f64,
    pub total_quantized_mb: f64,
    pub peak_layer: String,
    pub peak_entropy_mb: f64,
}

#[derive(Serialize)]
pub struct QuantizeRow {
    pub layer: String,
    pub weights: u64,
    pub bins: usize,
    pub scale: f64,
    pub step: f64,
    pub mse: f64,
    pub entropy_bits_per_weight: f64,
}

#[derive(Serialize)]
pub struct QuantizeReport {
    pub layers: Vec<QuantizeRow>,
    pub manifest: String,
}

#[derive(Serialize)]
pub struct CompressRow {
    pub layer: String,
    pub weights: u64,
    pub bins: usize,
    pub streams: usize,
    pub bytes: usize,
    pub bits_per_weight: f64,
}

#[derive(Serialize)]
pub struct CompressReport {
    pub layers: Vec<CompressRow>,
    pub total_weights: u64,
    pub archive_bytes: usize,
    pub bits_per_weight: f64,
}

#[derive(Serialize)]
pub struct AllocateRow {
    pub layer: String,
    pub weights: u64,
    pub bins: usize,
    pub entropy_bits_per_weight: f64,
}

#[derive(Serialize)]
pub struct AllocateReport {
    pub layers: Vec<AllocateRow>,
    pub achieved_mb: f64,
    pub target_mb: f64,
    pub converged: bool,
    pub iterations: usize,
}
