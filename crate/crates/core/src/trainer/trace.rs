use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One line of the loss trace.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub epoch: usize,
    /// Global iteration index, counted from the start of training.
    pub iteration: u64,
    pub pair: (usize, usize),
    pub adv_forward: f64,
    pub adv_backward: f64,
    pub cycle: f64,
    pub total: f64,
    pub lr_gen: f64,
    pub lr_disc: f64,
    pub disc_x: f64,
    pub disc_y: f64,
}

pub trait LogSink {
    fn record(&mut self, r: &TraceRecord) -> Result<()>;

    fn flush(&mut self) -> Result<()> {
        Ok(())
    }
}

/// Keeps every record; used by tests and short runs.
#[derive(Clone, Debug, Default)]
pub struct MemorySink {
    pub records: Vec<TraceRecord>,
}

impl LogSink for MemorySink {
    fn record(&mut self, r: &TraceRecord) -> Result<()> {
        self.records.push(*r);
        Ok(())
    }
}

/// Discards records.
#[derive(Clone, Copy, Debug, Default)]
pub struct NullSink;

impl LogSink for NullSink {
    fn record(&mut self, _: &TraceRecord) -> Result<()> {
        Ok(())
    }
}

/// Appends one JSON object per line.
pub struct JsonLinesSink {
    path: PathBuf,
    out: BufWriter<File>,
}

impl JsonLinesSink {
    pub fn append(path: &Path) -> Result<Self> {
        let file = OpenOptions::new().create(true).append(true).open(path).map_err(|e| Error::io(path, e))?;
        Ok(Self { path: path.to_path_buf(), out: BufWriter::new(file) })
    }
}

impl LogSink for JsonLinesSink {
    fn record(&mut self, r: &TraceRecord) -> Result<()> {
        let line = serde_json::to_string(r).map_err(|e| Error::Data(e.to_string()))?;
        writeln!(self.out, "{line}").map_err(|e| Error::io(&self.path, e))
    }

    fn flush(&mut self) -> Result<()> {
        self.out.flush().map_err(|e| Error::io(&self.path, e))
    }
}

/// Reads a trace written by [`JsonLinesSink`].
pub fn read_trace(path: &Path) -> Result<Vec<TraceRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(|e| Error::Data(format!("{}: {e}", path.display()))))
        .collect()
}
