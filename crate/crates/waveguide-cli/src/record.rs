//! Append-only JSON-lines records and the sweep CSV table.

use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use serde_json::Value;

#[derive(Debug, Clone, Serialize)]
pub struct SolverMeta {
    pub seed: u64,
    pub residuals: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ResultRecord {
    pub config_hash: String,
    /// Seconds since the Unix epoch.
    pub timestamp: u64,
    pub subcommand: String,
    pub parameters: Value,
    pub outputs: Value,
    pub solver: SolverMeta,
}

impl ResultRecord {
    pub fn new(config_hash: &str, subcommand: &str, parameters: Value, outputs: Value, solver: SolverMeta) -> Self {
        let timestamp = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        ResultRecord { config_hash: config_hash.to_string(), timestamp, subcommand: subcommand.to_string(), parameters, outputs, solver }
    }
}

pub struct RecordWriter {
    path: PathBuf,
    out: BufWriter<File>,
}

impl RecordWriter {
    /// Opens `dir/name` for appending, creating `dir` if needed.
    pub fn open(dir: &Path, name: &str) -> std::io::Result<Self> {
        std::fs::create_dir_all(dir)?;
        let path = dir.join(name);
        let file = OpenOptions::new().create(true).append(true).open(&path)?;
        Ok(RecordWriter { path, out: BufWriter::new(file) })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Writes one line and flushes, so partial sweeps survive interruption.
    pub fn append(&mut self, rec: &ResultRecord) -> std::io::Result<()> {
        serde_json::to_writer(&mut self.out, rec)?;
        self.out.write_all(b"\n")?;
        self.out.flush()
    }
}

/// One row of the sweep table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub f: f64,
    pub re_z: f64,
    pub im_z: f64,
    pub beta_used: f64,
    pub plateau_score: f64,
    pub residual: f64,
}

pub const CSV_HEADER: [&str; 6] = ["F", "Re Z", "Im Z", "beta_used", "plateau_score", "residual"];

/// Writes the table with shortest round-trip float formatting.
pub fn write_sweep_csv(path: &Path, rows: &[SweepRow]) -> csv::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(CSV_HEADER)?;
    for r in rows {
        w.write_record([r.f, r.re_z, r.im_z, r.beta_used, r.plateau_score, r.residual].map(|x| format!("{x:e}")))?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
pub fn read_sweep_csv(path: &Path) -> Result<Vec<SweepRow>, Box<dyn std::error::Error>> {
    let mut r = csv::Reader::from_path(path)?;
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let v: Vec<f64> = rec.iter().map(str::parse).collect::<Result<_, _>>()?;
        if v.len() != CSV_HEADER.len() {
            return Err(format!("expected {} columns, got {}", CSV_HEADER.len(), v.len()).into());
        }
        rows.push(SweepRow { f: v[0], re_z: v[1], im_z: v[2], beta_used: v[3], plateau_score: v[4], residual: v[5] });
    }
    Ok(rows)
}
