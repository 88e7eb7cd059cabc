use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::address::Address;
use crate::error::{Error, Result};
use crate::numerics::{Distribution, Value};

pub const TRACE_FORMAT_VERSION: u32 = 1;

fn is_zero(x: &f64) -> bool {
    *x == 0.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub t: usize,
    #[serde(rename = "addr")]
    pub address: Address,
    pub dist: Distribution,
    pub value: Value,
    pub observed: bool,
    /// `dist.log_prob(value)`
    pub lp: f64,
    /// Log-probability of the address transition into this entry. Always
    /// zero for program traces, whose control flow is deterministic given
    /// the values; surrogate traces carry their learned transition scores.
    #[serde(default, skip_serializing_if = "is_zero")]
    pub tlp: f64,
}

/// One execution: an ordered list of entries, implicitly terminated by END.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub id: u64,
    pub entries: Vec<TraceEntry>,
    pub log_joint: f64,
    /// Log-probability of the final transition to END (surrogate traces).
    #[serde(default, skip_serializing_if = "is_zero")]
    pub end_lp: f64,
    #[serde(rename = "v")]
    pub version: u32,
}

/// Log-joint accumulation used both when recording and when re-scoring,
/// so that the two agree exactly.
pub(crate) fn accumulate(entries: impl IntoIterator<Item = (f64, f64)>, end_lp: f64) -> f64 {
    let mut acc = 0.0;
    for (tlp, lp) in entries {
        acc += tlp;
        acc += lp;
    }
    acc + end_lp
}

impl Trace {
    pub fn new(id: u64, entries: Vec<TraceEntry>, end_lp: f64) -> Self {
        let log_joint = accumulate(entries.iter().map(|e| (e.tlp, e.lp)), end_lp);
        Self {
            id,
            entries,
            log_joint,
            end_lp,
            version: TRACE_FORMAT_VERSION,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, address: &str) -> Option<&TraceEntry> {
        self.entries.iter().find(|e| e.address.to_string() == address)
    }

    pub fn value_of(&self, address: &str) -> Option<Value> {
        self.get(address).map(|e| e.value)
    }

    pub fn addresses(&self) -> impl Iterator<Item = &Address> {
        self.entries.iter().map(|e| &e.address)
    }

    pub fn latent(&self) -> impl Iterator<Item = &TraceEntry> {
        self.entries.iter().filter(|e| !e.observed)
    }

    pub fn observed(&self) -> impl Iterator<Item = &TraceEntry> {
        self.entries.iter().filter(|e| e.observed)
    }

    /// Observed entries as an observation map.
    pub fn observations(&self) -> super::Observations {
        self.observed().map(|e| (e.address.to_string(), e.value)).collect()
    }

    /// Sum of latent-entry log-probabilities.
    pub fn latent_log_prob(&self) -> f64 {
        self.latent().map(|e| e.lp).sum()
    }

    /// Structural checks: nonempty, finite, unique addresses, consistent times.
    pub fn validate(&self) -> Result<()> {
        if self.entries.is_empty() {
            return Err(Error::Malformed(format!("trace {} has no entries", self.id)));
        }
        let mut seen = HashSet::with_capacity(self.entries.len());
        for (i, e) in self.entries.iter().enumerate() {
            if e.t != i {
                return Err(Error::Malformed(format!(
                    "trace {} entry {i} has time index {}",
                    self.id, e.t
                )));
            }
            if !seen.insert(&e.address) {
                return Err(Error::DuplicateAddress(e.address.to_string()));
            }
            e.dist.validate()?;
            if e.lp.is_nan() || e.tlp.is_nan() {
                return Err(Error::Malformed(format!("NaN log-probability at {}", e.address)));
            }
        }
        Ok(())
    }
}

/// Recompute the log-joint from stored specifications and values.
pub fn trace_logjoint(trace: &Trace) -> Result<f64> {
    trace.validate()?;
    let mut parts = Vec::with_capacity(trace.entries.len());
    for e in &trace.entries {
        parts.push((e.tlp, e.dist.log_prob(e.value)?));
    }
    Ok(accumulate(parts, trace.end_lp))
}
