use std::collections::HashMap;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context as _, Result};
use clap::Args;
use psn_core::ic::Query;
use psn_core::sims::{mu_w, AnyProgram, ProgramSpec, QueryMuW};
use psn_core::{Error, ProposalModel, SurrogateModel, Value};

pub struct RunContext {
    pub workers: usize,
    pub argv: Vec<String>,
}

/// Program selection shared by every subcommand.
#[derive(Args, Clone, Debug)]
pub struct ProgramArgs {
    /// Program family or preset: branch2, loopy, heat1d, heat1d-large.
    #[arg(long)]
    pub program: Option<String>,
    /// JSON file with either `{"program": .., "config": {..}}` or a bare
    /// configuration of the family named by --program.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

impl ProgramArgs {
    pub fn spec(&self) -> Result<ProgramSpec> {
        match (&self.program, &self.config) {
            (None, None) => bail!("one of --program or --config is required"),
            (Some(name), None) => Ok(ProgramSpec::preset(name)?),
            (name, Some(path)) => {
                let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                if let Ok(spec) = serde_json::from_str::<ProgramSpec>(&text) {
                    if let Some(n) = name {
                        if ProgramSpec::preset(n)?.family() != spec.family() {
                            bail!("--program {n} disagrees with config file program {}", spec.family());
                        }
                    }
                    return Ok(spec);
                }
                let n = name
                    .as_deref()
                    .ok_or_else(|| anyhow!("config file has no program tag; pass --program"))?;
                Ok(ProgramSpec::from_json(n, &text)?)
            }
        }
    }

    pub fn load(&self) -> Result<(ProgramSpec, AnyProgram)> {
        let spec = self.spec()?;
        let program = spec.build()?;
        Ok((spec, program))
    }
}

pub fn init_workers(workers: usize) -> Result<usize> {
    let n = if workers == 0 {
        std::thread::available_parallelism().map_or(1, |n| n.get())
    } else {
        workers
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| anyhow!("worker pool: {e}"))?;
    Ok(n)
}

/// Machine-readable error report for stderr.
pub fn error_json(e: &anyhow::Error) -> String {
    let kind = e.chain().find_map(|c| c.downcast_ref::<Error>()).map_or("cli", |e| e.kind());
    let message = format!("{e:#}");
    serde_json::json!({ "error": kind, "message": message }).to_string()
}

pub enum Checkpoint {
    Surrogate(Box<SurrogateModel>),
    Proposal(Box<ProposalModel>),
}

/// Load a checkpoint, telling surrogates from proposals by the file's model tag.
pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let kind = serde_json::from_str::<serde_json::Value>(&text)
        .ok()
        .and_then(|v| v.get("model").and_then(|m| m.as_str()).map(str::to_owned));
    let ckpt = match kind.as_deref() {
        Some(psn_core::surrogate::checkpoint::MODEL_KIND) => {
            Checkpoint::Surrogate(Box::new(SurrogateModel::from_checkpoint_str(&text)?))
        }
        Some(psn_core::ic::checkpoint::MODEL_KIND) => {
            Checkpoint::Proposal(Box::new(ProposalModel::from_checkpoint_str(&text)?))
        }
        _ => return Err(Error::Malformed(format!("{} is not a model checkpoint", path.display())).into()),
    };
    Ok(ckpt)
}

/// The surrogate and proposal among `paths`, at most one of each.
pub fn load_models(paths: &[PathBuf]) -> Result<(Option<SurrogateModel>, Option<ProposalModel>)> {
    let (mut psn, mut ic) = (None, None);
    for p in paths {
        match load_checkpoint(p)? {
            Checkpoint::Surrogate(m) if psn.is_none() => psn = Some(*m),
            Checkpoint::Proposal(m) if ic.is_none() => ic = Some(*m),
            _ => bail!("more than one checkpoint of the same kind given ({})", p.display()),
        }
    }
    Ok((psn, ic))
}

pub fn check_program(model_program: &str, program: &AnyProgram, what: &str) -> Result<()> {
    use psn_core::Program;
    if model_program != program.name() {
        return Err(Error::Config(format!(
            "{what} was trained on {model_program}, selected program is {}",
            program.name()
        ))
        .into());
    }
    Ok(())
}

/// `addr=value` pairs; integers become category indices.
pub fn parse_settings(pairs: &[String]) -> Result<HashMap<String, Value>> {
    pairs
        .iter()
        .map(|p| {
            let (k, v) = p.split_once('=').ok_or_else(|| anyhow!("expected addr=value, got {p:?}"))?;
            let k = k.trim();
            k.parse::<psn_core::Address>()?;
            let v = v.trim();
            let value = match v.parse::<usize>() {
                Ok(i) => Value::Index(i),
                Err(_) => Value::Real(v.parse::<f64>().with_context(|| format!("bad value in {p:?}"))?),
            };
            Ok((k.to_string(), value))
        })
        .collect()
}

pub struct NamedQuery {
    pub name: String,
    pub f: Box<Query<'static>>,
}

/// `mu_w`, `value:<addr>` (value of a site, error if absent) or
/// `present:<addr>` (1 if the site was reached, else 0).
pub fn parse_query(text: &str, spec: &ProgramSpec) -> Result<NamedQuery> {
    let f: Box<Query<'static>> = if text == "mu_w" {
        let ProgramSpec::Heat1d(c) = spec else {
            bail!("query mu_w needs a heat1d program");
        };
        let q = QueryMuW::from_config(c);
        Box::new(move |t| mu_w(t, &q))
    } else if let Some(addr) = text.strip_prefix("value:") {
        let addr = addr.to_string();
        Box::new(move |t| {
            t.value_of(&addr)
                .map(|v| v.as_f64())
                .ok_or_else(|| Error::Query(format!("trace {} lacks {addr}", t.id)))
        })
    } else if let Some(addr) = text.strip_prefix("present:") {
        let addr = addr.to_string();
        Box::new(move |t| Ok(if t.get(&addr).is_some() { 1.0 } else { 0.0 }))
    } else {
        bail!("unknown query {text:?} (mu_w, value:<addr>, present:<addr>)");
    };
    Ok(NamedQuery { name: text.to_string(), f })
}

pub fn display(p: &Path) -> String {
    p.display().to_string()
}
