use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::HarnessError;
use crate::randnet::ScalingRow;

/// One measured quantity, optionally checked against a bound.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultRow {
    pub experiment: String,
    pub config_hash: String,
    /// Sub-configuration label, e.g. `delta=0.1;region=ball`.
    pub config: String,
    pub metric: String,
    pub value: f64,
    pub stderr: Option<f64>,
    pub bound: Option<f64>,
    pub pass: Option<bool>,
}

/// Ordered, append-only row collector for one run.
#[derive(Debug, Clone)]
pub struct RowSink {
    experiment: String,
    config_hash: String,
    rows: Vec<ResultRow>,
}

impl RowSink {
    pub fn new(experiment: &str, config_hash: &str) -> Self {
        Self { experiment: experiment.into(), config_hash: config_hash.into(), rows: Vec::new() }
    }

    /// A row without a bound check.
    pub fn value(&mut self, config: &str, metric: &str, value: f64, stderr: Option<f64>) {
        self.push(config, metric, value, stderr, None, None);
    }

    /// A row checked against `bound`; `pass` is decided by the caller.
    pub fn check(&mut self, config: &str, metric: &str, value: f64, stderr: Option<f64>, bound: f64, pass: bool) {
        self.push(config, metric, value, stderr, Some(bound), Some(pass));
    }

    fn push(
        &mut self,
        config: &str,
        metric: &str,
        value: f64,
        stderr: Option<f64>,
        bound: Option<f64>,
        pass: Option<bool>,
    ) {
        self.rows.push(ResultRow {
            experiment: self.experiment.clone(),
            config_hash: self.config_hash.clone(),
            config: config.into(),
            metric: metric.into(),
            value,
            stderr,
            bound,
            pass,
        });
    }

    pub fn rows(&self) -> &[ResultRow] {
        &self.rows
    }

    pub fn checks(&self) -> usize {
        self.rows.iter().filter(|r| r.pass.is_some()).count()
    }

    pub fn failures(&self) -> usize {
        self.rows.iter().filter(|r| r.pass == Some(false)).count()
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> HarnessError {
    HarnessError::Io(format!("{}: {e}", path.display()))
}

/// Serialize `rows` as CSV with the struct's field order as header.
pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| io_err(path, e))?;
    for r in rows {
        w.serialize(r).map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

/// Attack-scaling rows keep their own fixed column set.
pub fn write_scaling_csv(path: &Path, rows: &[ScalingRow]) -> Result<(), HarnessError> {
    write_csv(path, rows)
}

/// Run summary written next to the CSV files.
#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub experiment: String,
    pub config_hash: String,
    pub seed: u64,
    pub rows: usize,
    pub checks: usize,
    pub failures: usize,
    pub pass: bool,
    pub files: Vec<String>,
    /// Pipeline-specific scalars, e.g. fitted slopes.
    pub extra: BTreeMap<String, f64>,
    /// Full config, `out` included.
    pub config: toml::Value,
}

pub fn write_summary(path: &Path, summary: &Summary) -> Result<(), HarnessError> {
    let text = toml::to_string(summary).map_err(|e| io_err(path, e))?;
    std::fs::write(path, text).map_err(|e| io_err(path, e))
}

/// Files of one finished run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub files: Vec<PathBuf>,
    pub checks: usize,
    pub failures: usize,
}

impl RunOutcome {
    pub fn passed(&self) -> bool {
        self.failures == 0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sink_counts_and_csv_layout() {
        let dir = tempfile::tempdir().unwrap();
        let mut sink = RowSink::new("covering", "abc");
        sink.value("n=2", "covering_bound", 25.0, None);
        sink.check("n=2;m=2", "max_dist2", 0.4, None, 0.5, true);
        sink.check("n=3;m=2", "max_dist2", 0.6, None, 0.5, false);
        assert_eq!((sink.checks(), sink.failures()), (2, 1));
        let path = dir.path().join("rows.csv");
        write_csv(&path, sink.rows()).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "experiment,config_hash,config,metric,value,stderr,bound,pass");
        assert_eq!(lines.next().unwrap(), "covering,abc,n=2,covering_bound,25.0,,,");
        assert_eq!(lines.count(), 2);
    }
}
