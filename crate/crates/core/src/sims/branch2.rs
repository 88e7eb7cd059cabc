//! Two-branch program: the smallest model with stochastic control flow.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Distribution;
use crate::ppl::{Context, Program};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Branch2Config {
    /// `a2` is taken when `a1` exceeds this.
    pub threshold: f64,
    pub a2_mean: f64,
    pub a2_std: f64,
    pub a3_low: f64,
    pub a3_high: f64,
    pub noise: f64,
}

impl Default for Branch2Config {
    fn default() -> Self {
        Self {
            threshold: 0.0,
            a2_mean: 2.0,
            a2_std: 1.0,
            a3_low: -3.0,
            a3_high: -1.0,
            noise: 0.5,
        }
    }
}

impl Branch2Config {
    pub fn validate(&self) -> Result<()> {
        if !(self.noise > 0.0 && self.a2_std > 0.0) || self.a3_low >= self.a3_high || !self.threshold.is_finite() {
            return Err(Error::Config(format!("invalid branch2 config {self:?}")));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default)]
pub struct Branch2 {
    pub config: Branch2Config,
}

impl Branch2 {
    pub fn new(config: Branch2Config) -> Result<Self> {
        config.validate()?;
        Ok(Self { config })
    }
}

impl Program for Branch2 {
    fn name(&self) -> &str {
        "branch2"
    }

    fn run(&self, ctx: &mut Context<'_>) -> Result<()> {
        let c = &self.config;
        let x1 = ctx.sample_real("a1", Distribution::normal(0.0, 1.0))?;
        let last = if x1 > c.threshold {
            ctx.sample_real("a2", Distribution::normal(c.a2_mean, c.a2_std))?
        } else {
            ctx.sample_real("a3", Distribution::uniform(c.a3_low, c.a3_high))?
        };
        ctx.observe("a4", Distribution::normal(last, c.noise))?;
        Ok(())
    }
}
