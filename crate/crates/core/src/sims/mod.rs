//! Benchmark programs.

pub mod branch2;
pub mod heat1d;
pub mod loopy;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ppl::{Context, Observations, Program};

pub use branch2::{Branch2, Branch2Config};
pub use heat1d::{mu_w, Heat1d, Heat1dConfig, QueryMuW, Regime};
pub use loopy::{Loopy, LoopyConfig};

/// Any of the bundled programs, selected by family name.
#[derive(Clone, Debug)]
pub enum AnyProgram {
    Branch2(Branch2),
    Loopy(Loopy),
    Heat1d(Heat1d),
}

/// Serializable program selection: family name plus its configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "program", content = "config", rename_all = "snake_case")]
pub enum ProgramSpec {
    Branch2(Branch2Config),
    Loopy(LoopyConfig),
    Heat1d(Heat1dConfig),
}

impl ProgramSpec {
    /// Default configuration of a family; `heat1d` is the small preset and
    /// `heat1d-large` the benchmark preset.
    pub fn preset(name: &str) -> Result<Self> {
        Ok(match name {
            "branch2" => ProgramSpec::Branch2(Branch2Config::default()),
            "loopy" => ProgramSpec::Loopy(LoopyConfig::default()),
            "heat1d" | "heat1d-small" => ProgramSpec::Heat1d(Heat1dConfig::small()),
            "heat1d-large" => ProgramSpec::Heat1d(Heat1dConfig::large()),
            _ => {
                return Err(Error::Config(format!(
                    "unknown program {name:?} (branch2, loopy, heat1d, heat1d-large)"
                )))
            }
        })
    }

    /// Parse a bare family config (given the family name) from JSON.
    pub fn from_json(name: &str, text: &str) -> Result<Self> {
        Ok(match Self::preset(name)? {
            ProgramSpec::Branch2(_) => ProgramSpec::Branch2(serde_json::from_str(text)?),
            ProgramSpec::Loopy(_) => ProgramSpec::Loopy(serde_json::from_str(text)?),
            ProgramSpec::Heat1d(_) => ProgramSpec::Heat1d(serde_json::from_str(text)?),
        })
    }

    pub fn build(&self) -> Result<AnyProgram> {
        Ok(match self {
            ProgramSpec::Branch2(c) => AnyProgram::Branch2(Branch2::new(c.clone())?),
            ProgramSpec::Loopy(c) => AnyProgram::Loopy(Loopy::new(c.clone())?),
            ProgramSpec::Heat1d(c) => AnyProgram::Heat1d(Heat1d::new(c.clone())?),
        })
    }

    pub fn family(&self) -> &'static str {
        match self {
            ProgramSpec::Branch2(_) => "branch2",
            ProgramSpec::Loopy(_) => "loopy",
            ProgramSpec::Heat1d(_) => "heat1d",
        }
    }
}

impl AnyProgram {
    fn inner(&self) -> &dyn Program {
        match self {
            AnyProgram::Branch2(p) => p,
            AnyProgram::Loopy(p) => p,
            AnyProgram::Heat1d(p) => p,
        }
    }
}

impl Program for AnyProgram {
    fn name(&self) -> &str {
        self.inner().name()
    }

    fn run(&self, ctx: &mut Context<'_>) -> Result<()> {
        self.inner().run(ctx)
    }

    fn summarize(&self, observations: &Observations) -> Result<Vec<f64>> {
        self.inner().summarize(observations)
    }
}
