//! JSON-lines persistence of recorded missions, diagnosis events and campaign rows.
//!
//! A trace file starts with one [`TraceHeader`] line followed by one [`Sample`] per line.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::run::RecordedRun;
use crate::engine::{EngineState, FaultEvent, HealthFactors};
use crate::error::{Error, Result};
use crate::mm_fdi::{DiagnosisEvent, Sample};

pub const TRACE_FORMAT: &str = "mmhkf-trace/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceHeader {
    pub format: String,
    pub dt: f64,
    pub samples: usize,
    pub faults: Vec<FaultEvent>,
    pub obem_health: HealthFactors,
    pub obem_start: EngineState,
    pub baseline_updates: Vec<(usize, HealthFactors)>,
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: impl IntoIterator<Item = T>) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for item in items {
        let line = serde_json::to_string(&item).map_err(|e| Error::parse(path, e))?;
        writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::parse(path, format!("line {}: {e}", n + 1)))?);
    }
    Ok(out)
}

pub fn write_trace(path: &Path, run: &RecordedRun) -> Result<()> {
    let header = TraceHeader {
        format: TRACE_FORMAT.into(),
        dt: run.dt,
        samples: run.samples.len(),
        faults: run.faults.clone(),
        obem_health: run.obem_health,
        obem_start: run.obem_start,
        baseline_updates: run.baseline_updates.clone(),
    };
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let mut put = |v: String| writeln!(w, "{v}").map_err(|e| Error::io(path, e));
    put(serde_json::to_string(&header).map_err(|e| Error::parse(path, e))?)?;
    for s in &run.samples {
        put(serde_json::to_string(s).map_err(|e| Error::parse(path, e))?)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_trace(path: &Path) -> Result<RecordedRun> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut lines = BufReader::new(file).lines();
    let first = lines
        .next()
        .ok_or_else(|| Error::parse(path, "empty trace file"))?
        .map_err(|e| Error::io(path, e))?;
    let header: TraceHeader = serde_json::from_str(&first).map_err(|e| Error::parse(path, format!("header: {e}")))?;
    if header.format != TRACE_FORMAT {
        return Err(Error::parse(path, format!("unsupported trace format {:?}", header.format)));
    }
    let mut samples = Vec::with_capacity(header.samples);
    for (n, line) in lines.enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let s: Sample = serde_json::from_str(&line).map_err(|e| Error::parse(path, format!("line {}: {e}", n + 2)))?;
        if s.k != samples.len() {
            return Err(Error::parse(path, format!("line {}: expected sample {}, found {}", n + 2, samples.len(), s.k)));
        }
        samples.push(s);
    }
    if samples.len() != header.samples {
        return Err(Error::parse(path, format!("header announces {} samples, found {}", header.samples, samples.len())));
    }
    Ok(RecordedRun {
        dt: header.dt,
        samples,
        faults: header.faults,
        obem_health: header.obem_health,
        obem_start: header.obem_start,
        baseline_updates: header.baseline_updates,
    })
}

pub fn write_events(path: &Path, events: &[DiagnosisEvent]) -> Result<()> {
    write_jsonl(path, events)
}

pub fn read_events(path: &Path) -> Result<Vec<DiagnosisEvent>> {
    read_jsonl(path)
}
