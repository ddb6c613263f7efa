//! Persisted trajectories.
//!
//! A record is newline-delimited JSON: a header object on the first line,
//! then one object per recorded step. Wall time is kept in memory only so
//! that replaying a config reproduces the file byte for byte.

use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VelocityEvent {
    Reflect,
    Refresh,
    /// Reflection selected at a zero gradient; the velocity is kept.
    Unchanged,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordHeader {
    pub algorithm: String,
    #[serde(default)]
    pub label: String,
    #[serde(default)]
    pub trial: u64,
    pub objective: String,
    pub dim: usize,
    /// Number of iterations run (K).
    pub steps: u64,
    /// Every `stride`-th step is recorded, plus the last one.
    pub stride: u64,
    pub rng: String,
    pub seed: u64,
    pub config: serde_json::Value,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StepEntry {
    pub k: u64,
    pub theta: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub velocity: Option<Vec<f64>>,
    pub eta: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub batch: Option<Vec<usize>>,
    pub grad_norm: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub event: Option<VelocityEvent>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reflect_prob: Option<f64>,
    /// Chain index, for records that hold one state per independent chain.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chain: Option<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub header: RecordHeader,
    pub steps: Vec<StepEntry>,
    pub wall_time: Duration,
}

impl RunRecord {
    pub fn new(header: RecordHeader) -> Self {
        Self {
            header,
            steps: Vec::new(),
            wall_time: Duration::ZERO,
        }
    }

    pub fn final_theta(&self) -> Option<&[f64]> {
        self.steps.last().map(|s| s.theta.as_slice())
    }

    pub fn should_record(&self, k: u64) -> bool {
        let stride = self.header.stride.max(1);
        k.is_multiple_of(stride) || k == self.header.steps
    }

    pub fn write_ndjson<W: Write>(&self, w: W) -> Result<()> {
        let mut w = BufWriter::new(w);
        serde_json::to_writer(&mut w, &self.header)?;
        w.write_all(b"\n")?;
        for step in &self.steps {
            serde_json::to_writer(&mut w, step)?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_ndjson(&self) -> Result<Vec<u8>> {
        let mut buf = Vec::new();
        self.write_ndjson(&mut buf)?;
        Ok(buf)
    }

    pub fn read_ndjson<R: Read>(r: R) -> Result<Self> {
        let mut lines = BufReader::new(r).lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::MalformedRun("record has no header line".into()))??;
        let header: RecordHeader = serde_json::from_str(&header)?;
        let mut steps = Vec::new();
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            steps.push(serde_json::from_str(&line)?);
        }
        Ok(Self {
            header,
            steps,
            wall_time: Duration::ZERO,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.write_ndjson(std::fs::File::create(path)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_ndjson(std::fs::File::open(path)?)
    }

    /// `k,theta_0,...,theta_{d-1},eta` for plotting.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut w = BufWriter::new(w);
        write!(w, "k")?;
        for i in 0..self.header.dim {
            write!(w, ",theta_{i}")?;
        }
        writeln!(w, ",eta")?;
        for s in &self.steps {
            write!(w, "{}", s.k)?;
            for x in &s.theta {
                write!(w, ",{x}")?;
            }
            writeln!(w, ",{}", s.eta)?;
        }
        w.flush()?;
        Ok(())
    }
}
