//! Trial tables and run summaries.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::rng::stream_id;

/// One row of a trial table; flags are stored as 0/1.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub replicate: u64,
    pub stream: u64,
    pub values: Vec<f64>,
}

/// Records of one run with a fixed column order.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialTable {
    pub config_hash: String,
    pub columns: Vec<&'static str>,
    pub rows: Vec<TrialRecord>,
}

impl TrialTable {
    pub fn new(config_hash: String, columns: Vec<&'static str>) -> Self {
        TrialTable { config_hash, columns, rows: Vec::new() }
    }

    /// Appends replicate `replicate` of a run seeded with `seed`.
    pub fn push(&mut self, seed: u64, replicate: u64, values: Vec<f64>) {
        assert_eq!(values.len(), self.columns.len(), "row width must match the columns");
        self.rows.push(TrialRecord { replicate, stream: stream_id(seed, replicate), values });
    }

    pub fn column_index(&self, name: &str) -> Result<usize> {
        self.columns
            .iter()
            .position(|c| *c == name)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown column `{name}`")))
    }

    pub fn column(&self, name: &str) -> Result<Vec<f64>> {
        let j = self.column_index(name)?;
        Ok(self.rows.iter().map(|r| r.values[j]).collect())
    }

    /// `replicate,stream,config_hash,<columns>` with `\n` line endings and
    /// shortest round-trip float formatting.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
        let mut header = vec!["replicate", "stream", "config_hash"];
        header.extend(self.columns.iter().copied());
        w.write_record(&header)?;
        for r in &self.rows {
            let mut fields = vec![r.replicate.to_string(), r.stream.to_string(), self.config_hash.clone()];
            fields.extend(r.values.iter().map(|v| v.to_string()));
            w.write_record(&fields)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }
}

/// Mean and standard error of the mean.
pub fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    /// Hard checks decide the exit status; soft checks are reported only.
    pub hard: bool,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub scenario: String,
    pub config_hash: String,
    pub config: serde_json::Value,
    pub trials: usize,
    pub wall_time_seconds: f64,
    pub means: BTreeMap<String, f64>,
    pub std_errors: BTreeMap<String, f64>,
    pub extra: BTreeMap<String, f64>,
    pub checks: Vec<Check>,
    /// Every hard check passed.
    pub passed: bool,
}

impl Summary {
    pub fn hard_failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| c.hard && !c.passed)
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        serde_json::to_writer_pretty(&mut f, self)?;
        f.write_all(b"\n")?;
        Ok(())
    }
}
