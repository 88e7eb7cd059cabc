use std::path::Path;

use anyhow::Result;
use serde::Serialize;

use crate::common::RunContext;

/// Wall-clock measurements; the only manifest fields that vary between
/// otherwise identical runs.
#[derive(Clone, Debug, Default, Serialize)]
pub struct Timing {
    pub wall_seconds: f64,
    pub traces: u64,
    pub traces_per_second: f64,
}

impl Timing {
    pub fn new(wall_seconds: f64, traces: u64) -> Self {
        Self {
            wall_seconds,
            traces,
            traces_per_second: if wall_seconds > 0.0 { traces as f64 / wall_seconds } else { 0.0 },
        }
    }
}

/// Everything needed to replay a run, written next to its primary output.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub tool_version: &'static str,
    pub subcommand: &'static str,
    pub argv: Vec<String>,
    pub program: Option<psn_core::sims::ProgramSpec>,
    pub config_path: Option<String>,
    pub seed: u64,
    pub workers: usize,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    pub checkpoints: Vec<String>,
    pub timing: Timing,
}

impl RunManifest {
    pub fn new(ctx: &RunContext, subcommand: &'static str, seed: u64) -> Self {
        Self {
            tool_version: env!("CARGO_PKG_VERSION"),
            subcommand,
            argv: ctx.argv.clone(),
            program: None,
            config_path: None,
            seed,
            workers: ctx.workers,
            inputs: Vec::new(),
            outputs: Vec::new(),
            checkpoints: Vec::new(),
            timing: Timing::default(),
        }
    }

    /// Write to `<out>.manifest.json`.
    pub fn write_for(&self, out: &Path) -> Result<()> {
        let path = crate::sibling(out, ".manifest.json");
        std::fs::write(&path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }
}
