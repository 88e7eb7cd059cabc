use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context as _, Result};
use clap::Args;
use psn_core::numerics::rng::stream_id;
use psn_core::ppl::{run_clamped, DEFAULT_T_MAX};
use psn_core::sims::{ProgramSpec, Regime};
use psn_core::{CounterRng, Observations, Program, Trace, Value};
use serde::{Deserialize, Serialize};

use crate::common::{display, parse_settings, ProgramArgs, RunContext};
use crate::manifest::RunManifest;

pub const OBSERVATION_FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ObservationSet {
    pub id: String,
    pub observations: Observations,
    /// Latent values of the run that produced the observations, if known.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub truth: BTreeMap<String, Value>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ObservationFile {
    pub version: u32,
    pub program: String,
    pub sets: Vec<ObservationSet>,
}

impl ObservationFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let f: ObservationFile = serde_json::from_str(&text)
            .map_err(|e| psn_core::Error::Malformed(format!("observation file {}: {e}", path.display())))?;
        if f.version != OBSERVATION_FORMAT_VERSION {
            return Err(psn_core::Error::Version {
                found: f.version,
                expected: OBSERVATION_FORMAT_VERSION,
            }
            .into());
        }
        if f.sets.is_empty() {
            return Err(psn_core::Error::Malformed(format!("observation file {} has no sets", path.display())).into());
        }
        Ok(f)
    }
}

#[derive(Args, Debug)]
pub struct MakeObsArgs {
    #[command(flatten)]
    program: ProgramArgs,
    /// Heat1d observation regime (low, nominal, high); repeatable.
    #[arg(long)]
    regime: Vec<String>,
    /// Clamp a site, `addr=value`; repeatable. Produces one set.
    #[arg(long = "set")]
    settings: Vec<String>,
    /// Number of unclamped prior runs when neither --regime nor --set is given.
    #[arg(long, default_value_t = 1)]
    n: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Observation file (JSON).
    #[arg(long)]
    out: PathBuf,
}

/// Warn about clamps that scored zero density.
pub fn warn_out_of_support(trace: &Trace, clamps: &HashMap<String, Value>) {
    let mut keys: Vec<&String> = clamps.keys().collect();
    keys.sort();
    for k in keys {
        match trace.get(k) {
            Some(e) if e.lp == f64::NEG_INFINITY => {
                log::warn!("setting {k} = {} lies outside the support of {}", e.value, e.dist)
            }
            None => log::warn!("setting {k} was never reached by the program"),
            _ => {}
        }
    }
}

fn clamped_set(program: &dyn Program, id: String, clamps: &HashMap<String, Value>, rng: &mut CounterRng) -> Result<ObservationSet> {
    let trace = run_clamped(program, clamps, rng, 0, DEFAULT_T_MAX)?;
    warn_out_of_support(&trace, clamps);
    Ok(ObservationSet {
        id,
        observations: trace.observations(),
        truth: trace.latent().map(|e| (e.address.to_string(), e.value)).collect(),
    })
}

pub fn run(ctx: &RunContext, a: MakeObsArgs) -> Result<()> {
    let (spec, program) = a.program.load()?;
    let base = CounterRng::new(a.seed, stream_id("observations"));
    let mut sets = Vec::new();
    if !a.regime.is_empty() {
        let ProgramSpec::Heat1d(cfg) = &spec else {
            bail!("--regime applies to heat1d programs only");
        };
        let regimes: Vec<Regime> = if a.regime.iter().any(|r| r == "all") {
            Regime::ALL.to_vec()
        } else {
            a.regime.iter().map(|r| r.parse()).collect::<psn_core::Result<_>>()?
        };
        for (i, r) in regimes.into_iter().enumerate() {
            let mut clamps = r.settings(cfg);
            clamps.extend(parse_settings(&a.settings)?);
            sets.push(clamped_set(&program, r.name().into(), &clamps, &mut base.split(i as u64))?);
        }
    } else if !a.settings.is_empty() {
        let clamps = parse_settings(&a.settings)?;
        sets.push(clamped_set(&program, "set".into(), &clamps, &mut base.split(0))?);
    } else {
        for i in 0..a.n {
            sets.push(clamped_set(&program, format!("prior{i}"), &HashMap::new(), &mut base.split(i))?);
        }
    }
    let file = ObservationFile {
        version: OBSERVATION_FORMAT_VERSION,
        program: program.name().to_string(),
        sets,
    };
    std::fs::write(&a.out, serde_json::to_string_pretty(&file)? + "\n")?;
    let mut m = RunManifest::new(ctx, "make-obs", a.seed);
    m.program = Some(spec);
    m.config_path = a.program.config.as_deref().map(display);
    m.outputs.push(display(&a.out));
    m.write_for(&a.out)
}
