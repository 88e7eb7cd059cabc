//! JSON-Lines trace datasets: one trace per line.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;

use super::runtime::{run_prior, Program};
use super::trace::{Trace, TRACE_FORMAT_VERSION};
use crate::error::{Error, Result};
use crate::numerics::CounterRng;

/// Append-only trace writer.
pub struct TraceWriter {
    out: BufWriter<File>,
    written: usize,
}

impl TraceWriter {
    pub fn create(path: &Path) -> Result<Self> {
        Ok(Self {
            out: BufWriter::new(File::create(path)?),
            written: 0,
        })
    }

    pub fn append(path: &Path) -> Result<Self> {
        let f = std::fs::OpenOptions::new().create(true).append(true).open(path)?;
        Ok(Self {
            out: BufWriter::new(f),
            written: 0,
        })
    }

    pub fn write(&mut self, trace: &Trace) -> Result<()> {
        serde_json::to_writer(&mut self.out, trace)?;
        self.out.write_all(b"\n")?;
        self.written += 1;
        Ok(())
    }

    pub fn written(&self) -> usize {
        self.written
    }

    pub fn finish(mut self) -> Result<()> {
        self.out.flush()?;
        Ok(())
    }
}

pub fn save_traces(traces: &[Trace], path: &Path) -> Result<()> {
    let mut w = TraceWriter::create(path)?;
    for t in traces {
        w.write(t)?;
    }
    w.finish()
}

pub fn parse_trace(line: &str) -> Result<Trace> {
    let raw: serde_json::Value = serde_json::from_str(line)?;
    match raw.get("v").and_then(|v| v.as_u64()) {
        Some(v) if v == u64::from(TRACE_FORMAT_VERSION) => {}
        Some(v) => {
            return Err(Error::Version {
                found: v as u32,
                expected: TRACE_FORMAT_VERSION,
            })
        }
        None => return Err(Error::Malformed("trace line without version field".into())),
    }
    let trace: Trace = serde_json::from_value(raw)?;
    trace.validate()?;
    Ok(trace)
}

/// Load every trace in a JSONL file. Blank lines are skipped; an empty file
/// is an empty dataset.
pub fn load_traces(path: &Path) -> Result<Vec<Trace>> {
    let reader = BufReader::new(File::open(path)?);
    let mut traces = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let t = parse_trace(&line).map_err(|e| match e {
            Error::Version { .. } => e,
            other => Error::Malformed(format!("line {}: {other}", i + 1)),
        })?;
        traces.push(t);
    }
    Ok(traces)
}

/// Generate `n` prior traces. Trace `i` draws from stream `i` of `seed`, so
/// the output does not depend on how many workers run.
pub fn generate_traces<P: Program + ?Sized>(
    program: &P,
    seed: u64,
    range: std::ops::Range<u64>,
    t_max: usize,
) -> Result<Vec<Trace>> {
    range
        .into_par_iter()
        .map(|i| {
            let mut rng = CounterRng::new(seed, i);
            run_prior(program, &mut rng, i, t_max)
        })
        .collect()
}
