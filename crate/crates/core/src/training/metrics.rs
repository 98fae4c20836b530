//! Per-step metrics as JSON lines.
//!
//! The log carries only deterministic quantities (losses and the
//! intermediate-embedding monitor), so two runs with the same seed produce
//! byte-identical files. Wall-clock timing stays in [`super::StepMetrics`]
//! and is reported on stderr, never written here.

use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::LossBundle;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub step: u64,
    pub l_mid_spk: f64,
    pub l_recon: f64,
    pub l_recon_postnet: f64,
    pub l_std: f64,
    pub l_spk: f64,
    pub total: f64,
    pub e_mid_l1: f64,
}

impl MetricsRecord {
    pub fn new(step: u64, losses: &LossBundle, e_mid_l1: f64) -> Self {
        MetricsRecord {
            step,
            l_mid_spk: losses.l_mid_spk,
            l_recon: losses.l_recon,
            l_recon_postnet: losses.l_recon_postnet,
            l_std: losses.l_std,
            l_spk: losses.l_spk,
            total: losses.total,
            e_mid_l1,
        }
    }
}

pub struct MetricsWriter {
    out: BufWriter<std::fs::File>,
    path: std::path::PathBuf,
}

impl MetricsWriter {
    pub fn create(path: &Path, append: bool) -> Result<Self> {
        let file = std::fs::OpenOptions::new()
            .create(true)
            .write(true)
            .append(append)
            .truncate(!append)
            .open(path)
            .map_err(|e| Error::io(path, e))?;
        Ok(MetricsWriter { out: BufWriter::new(file), path: path.to_path_buf() })
    }

    pub fn write(&mut self, record: &MetricsRecord) -> Result<()> {
        let line = serde_json::to_string(record).map_err(|e| Error::json(&self.path, e))?;
        writeln!(self.out, "{line}").map_err(|e| Error::io(&self.path, e))
    }

    pub fn flush(&mut self) -> Result<()> {
        self.out.flush().map_err(|e| Error::io(&self.path, e))
    }
}

pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(|e| Error::json(path, e)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(step: u64) -> MetricsRecord {
        let b = LossBundle::new(0.1, 0.2, 0.3, 0.05, 0.4, 3.0);
        MetricsRecord::new(step, &b, 0.1)
    }

    #[test]
    fn write_read_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("metrics.jsonl");
        let mut w = MetricsWriter::create(&p, false).unwrap();
        for s in 1..=3 {
            w.write(&record(s)).unwrap();
        }
        w.flush().unwrap();
        let back = read_metrics(&p).unwrap();
        assert_eq!(back.len(), 3);
        assert_eq!(back[2].step, 3);
        assert_eq!(back[0].total, record(1).total);
    }

    #[test]
    fn append_mode_continues_the_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("metrics.jsonl");
        {
            let mut w = MetricsWriter::create(&p, false).unwrap();
            w.write(&record(1)).unwrap();
            w.flush().unwrap();
        }
        {
            let mut w = MetricsWriter::create(&p, true).unwrap();
            w.write(&record(2)).unwrap();
            w.flush().unwrap();
        }
        let back = read_metrics(&p).unwrap();
        assert_eq!(back.iter().map(|r| r.step).collect::<Vec<_>>(), vec![1, 2]);
    }

    #[test]
    fn identical_records_serialize_identically() {
        let a = serde_json::to_string(&record(5)).unwrap();
        let b = serde_json::to_string(&record(5)).unwrap();
        assert_eq!(a, b);
    }
}
