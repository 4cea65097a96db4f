use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;

/// A synthetic dataset: numeric rows written as CSV, with the generation
/// parameters in a JSON sidecar.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Dataset {
    pub kind: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    pub params: serde_json::Value,
}

impl Dataset {
    pub fn to_csv(&self) -> String {
        let mut out = self.header.join(",");
        out.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }

    /// Writes `<stem>.csv` and `<stem>.json` into `dir`.
    pub fn write(&self, dir: &Path, stem: &str) -> Result<()> {
        fs::create_dir_all(dir)?;
        fs::File::create(dir.join(format!("{stem}.csv")))?.write_all(self.to_csv().as_bytes())?;
        let sidecar = serde_json::json!({ "kind": self.kind, "params": self.params });
        fs::write(dir.join(format!("{stem}.json")), serde_json::to_string_pretty(&sidecar)?)?;
        Ok(())
    }
}
