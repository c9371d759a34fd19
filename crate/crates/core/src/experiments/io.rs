//! CSV tables and run manifests.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Serialize;

use crate::config::SystemConfig;
use crate::error::Result;

/// Shortest decimal string that parses back to the same `f64`.
pub fn format_f64(x: f64) -> String {
    format!("{x:?}")
}

/// Writes an RFC-4180 table with a header row.
pub fn write_csv<I, R>(path: &Path, header: &[&str], rows: I) -> Result<()>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = String>,
{
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::CRLF)
        .from_path(path)?;
    w.write_record(header)?;
    for row in rows {
        w.write_record(row)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a table written by [`write_csv`], returning header and rows.
pub fn read_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let mut r = csv::Reader::from_path(path)?;
    let header = r.headers()?.iter().map(str::to_owned).collect();
    let rows = r
        .records()
        .map(|rec| rec.map(|r| r.iter().map(str::to_owned).collect()))
        .collect::<std::result::Result<_, _>>()?;
    Ok((header, rows))
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub code_version: String,
    /// Config file text that reproduces the run.
    pub config_text: String,
    pub config: SystemConfig,
    /// Command-specific parameters not held by the config.
    pub parameters: serde_json::Value,
    pub seed: u64,
    pub seed_streams: String,
    pub threads: usize,
    pub residuals: BTreeMap<String, f64>,
    pub notes: Vec<String>,
    pub wall_clock_seconds: f64,
    pub outputs: Vec<String>,
}

impl RunManifest {
    pub fn new(command: &str, cfg: &SystemConfig) -> Self {
        Self {
            command: command.to_owned(),
            code_version: env!("CARGO_PKG_VERSION").to_owned(),
            config_text: cfg.to_config_string(),
            config: cfg.clone(),
            parameters: serde_json::Value::Null,
            seed: cfg.seed,
            seed_streams: "ChaCha8(seed) with stream (realization << 32) | trajectory".to_owned(),
            threads: current_threads(),
            residuals: BTreeMap::new(),
            notes: Vec::new(),
            wall_clock_seconds: 0.0,
            outputs: Vec::new(),
        }
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(dir.join("manifest.json"), text + "\n")?;
        Ok(())
    }
}

fn current_threads() -> usize {
    #[cfg(feature = "parallel")]
    {
        rayon::current_num_threads()
    }
    #[cfg(not(feature = "parallel"))]
    {
        1
    }
}
