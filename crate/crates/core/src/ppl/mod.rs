//! Trace-producing probabilistic programs.

pub mod address;
pub mod dataset;
pub mod runtime;
pub mod trace;

use std::collections::BTreeMap;

use crate::numerics::Value;

pub use address::Address;
pub use dataset::{generate_traces, load_traces, save_traces, TraceWriter};
pub use runtime::{
    run_clamped, run_guided, run_prior, ClampController, Context, Controller, GuidedRun, PriorController, Program, Proposal,
    DEFAULT_T_MAX,
};
pub use trace::{trace_logjoint, Trace, TraceEntry, TRACE_FORMAT_VERSION};

/// Observed values keyed by rendered address.
pub type Observations = BTreeMap<String, Value>;
