//! Variable-length loop: geometric number of iterations, one observed sum.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Distribution;
use crate::ppl::{Context, Program};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LoopyConfig {
    /// Probability of another iteration (category 0 of `cont`).
    pub p_continue: f64,
    pub noise: f64,
}

impl Default for LoopyConfig {
    fn default() -> Self {
        Self {
            p_continue: 0.8,
            noise: 1.0,
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct Loopy {
    pub config: LoopyConfig,
}

impl Loopy {
    pub fn new(config: LoopyConfig) -> Result<Self> {
        if !(0.0..1.0).contains(&config.p_continue) || !(config.noise > 0.0) {
            return Err(Error::Config(format!("invalid loopy config {config:?}")));
        }
        Ok(Self { config })
    }
}

impl Program for Loopy {
    fn name(&self) -> &str {
        "loopy"
    }

    fn run(&self, ctx: &mut Context<'_>) -> Result<()> {
        let p = self.config.p_continue;
        let mut sum = 0.0;
        loop {
            sum += ctx.sample_real("step", Distribution::normal(0.0, 1.0))?;
            if ctx.sample_index("cont", Distribution::categorical(vec![p, 1.0 - p]))? != 0 {
                break;
            }
        }
        ctx.observe("sum", Distribution::normal(sum, self.config.noise))?;
        Ok(())
    }
}

/// Number of loop iterations recorded in a loopy trace.
pub fn iterations(trace: &crate::ppl::Trace) -> usize {
    trace.entries.iter().filter(|e| e.address.label == "step").count()
}
