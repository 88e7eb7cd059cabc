use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context as _, Result};
use clap::Args;
use psn_core::ic::ic_train;
use psn_core::numerics::AdamConfig;
use psn_core::ppl::{load_traces, run_prior, DEFAULT_T_MAX};
use psn_core::sims::ProgramSpec;
use psn_core::training::{EpochRecord, TrainConfig};
use psn_core::{CounterRng, Error, IcConfig, Program, ProposalModel, PsnConfig, SurrogateModel, Trace};

use crate::common::{check_program, display, load_checkpoint, Checkpoint, ProgramArgs, RunContext};
use crate::manifest::{RunManifest, Timing};
use crate::{sibling, TrainFlags};

/// Prior runs used to enumerate the address labels a program can emit.
const PROBE_RUNS: u64 = 64;

#[derive(Args, Debug)]
pub struct TrainPsnArgs {
    /// Program of the dataset; checked against the traces when given.
    #[command(flatten)]
    program: ProgramArgs,
    /// Trace dataset (JSONL).
    #[arg(long)]
    dataset: PathBuf,
    /// Resume from this surrogate checkpoint.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[command(flatten)]
    train: TrainFlags,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 128)]
    hidden: usize,
    #[arg(long, default_value_t = 64)]
    addr_emb: usize,
    #[arg(long, default_value_t = 16)]
    value_emb: usize,
    #[arg(long, default_value_t = DEFAULT_T_MAX)]
    t_max: usize,
    /// Output checkpoint; the loss history goes to `<out>.loss.csv`.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
pub struct TrainIcArgs {
    #[command(flatten)]
    program: ProgramArgs,
    /// Trace dataset (JSONL).
    #[arg(long)]
    dataset: PathBuf,
    /// Resume from this proposal checkpoint.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[command(flatten)]
    train: TrainFlags,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 128)]
    hidden: usize,
    #[arg(long, default_value_t = 32)]
    addr_emb: usize,
    #[arg(long, default_value_t = 16)]
    value_emb: usize,
    #[arg(long, default_value_t = 64)]
    obs_hidden: usize,
    #[arg(long, default_value_t = 64)]
    obs_emb: usize,
    /// Output checkpoint; the loss history goes to `<out>.loss.csv`.
    #[arg(long)]
    out: PathBuf,
}

fn train_config(f: &TrainFlags, seed: u64) -> TrainConfig {
    TrainConfig {
        epochs: f.epochs,
        batch_size: f.batch_size,
        adam: AdamConfig {
            lr: f.lr,
            ..Default::default()
        },
        holdout_every: f.holdout_every,
        seed,
        lr_decay: f.lr_decay,
    }
}

fn labels<'a>(traces: impl IntoIterator<Item = &'a Trace>) -> BTreeSet<String> {
    traces
        .into_iter()
        .flat_map(|t| t.addresses().map(|a| a.label.clone()))
        .collect()
}

/// Refuse a dataset whose address labels the program never emits.
fn check_dataset(program: &dyn Program, traces: &[Trace], t_max: usize) -> Result<()> {
    let probe: Vec<Trace> = (0..PROBE_RUNS)
        .map(|i| run_prior(program, &mut CounterRng::new(0, i), i, t_max))
        .collect::<psn_core::Result<_>>()?;
    let known = labels(&probe);
    let found = labels(traces);
    let foreign: Vec<&String> = found.difference(&known).collect();
    if !foreign.is_empty() {
        let expected: Vec<&String> = known.iter().collect();
        return Err(Error::Config(format!(
            "dataset does not come from program {}: addresses {foreign:?} are unknown to it (it emits {expected:?})",
            program.name()
        ))
        .into());
    }
    Ok(())
}

fn load_dataset(path: &Path) -> Result<Vec<Trace>> {
    load_traces(path).with_context(|| format!("loading dataset {}", path.display()))
}

fn write_loss(out: &Path, history: &[EpochRecord]) -> Result<PathBuf> {
    let path = sibling(out, ".loss.csv");
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(["epoch", "train_nll", "heldout_nll"])?;
    for r in history {
        w.write_record([r.epoch.to_string(), r.train_nll.to_string(), r.heldout_nll.to_string()])?;
    }
    w.flush()?;
    Ok(path)
}

fn log_epoch(r: &EpochRecord) {
    log::info!("epoch {}: train {:.5} held-out {:.5}", r.epoch, r.train_nll, r.heldout_nll);
}

pub fn run_psn(ctx: &RunContext, a: TrainPsnArgs) -> Result<()> {
    let traces = load_dataset(&a.dataset)?;
    let selected = if a.program.program.is_some() || a.program.config.is_some() {
        Some(a.program.load()?)
    } else {
        None
    };
    let mut model = match (&a.checkpoint, &selected) {
        (Some(p), _) => {
            let m = match load_checkpoint(p)? {
                Checkpoint::Surrogate(m) => *m,
                Checkpoint::Proposal(_) => anyhow::bail!("{} holds a proposal, not a surrogate", p.display()),
            };
            let family = ProgramSpec::preset(m.program())?.build()?;
            check_dataset(&family, &traces, m.config().t_max)?;
            if let Some((_, program)) = &selected {
                check_program(m.program(), program, "checkpoint")?;
            }
            m
        }
        (None, Some((_, program))) => SurrogateModel::new(
            program.name(),
            PsnConfig {
                hidden: a.hidden,
                addr_emb: a.addr_emb,
                value_emb: a.value_emb,
                t_max: a.t_max,
                seed: a.seed,
            },
        )?,
        (None, None) => anyhow::bail!("a fresh surrogate needs --program or --config"),
    };
    if let Some((_, program)) = &selected {
        check_dataset(program, &traces, a.t_max)?;
    }
    let spec = selected.map(|s| s.0);
    let start = Instant::now();
    let cfg = train_config(&a.train, a.seed);
    psn_core::surrogate::psn_train(&mut model, &traces, &cfg, log_epoch)?;
    let wall = start.elapsed().as_secs_f64();
    model.save(&a.out)?;
    let loss = write_loss(&a.out, &model.meta.history)?;

    let mut m = RunManifest::new(ctx, "train-psn", a.seed);
    m.program = spec;
    m.config_path = a.program.config.as_deref().map(display);
    m.inputs.push(display(&a.dataset));
    m.checkpoints.extend(a.checkpoint.as_deref().map(display));
    m.outputs = vec![display(&a.out), display(&loss)];
    m.timing = Timing::new(wall, traces.len() as u64 * u64::from(a.train.epochs));
    m.write_for(&a.out)
}

pub fn run_ic(ctx: &RunContext, a: TrainIcArgs) -> Result<()> {
    let traces = load_dataset(&a.dataset)?;
    let (spec, program) = a.program.load()?;
    check_dataset(&program, &traces, DEFAULT_T_MAX)?;
    let mut model = match &a.checkpoint {
        Some(p) => match load_checkpoint(p)? {
            Checkpoint::Proposal(m) => {
                let family = ProgramSpec::preset(m.program())?.build()?;
                check_dataset(&family, &traces, DEFAULT_T_MAX)?;
                check_program(m.program(), &program, "checkpoint")?;
                *m
            }
            Checkpoint::Surrogate(_) => anyhow::bail!("{} holds a surrogate, not a proposal", p.display()),
        },
        None => ProposalModel::new(
            program.name(),
            IcConfig {
                hidden: a.hidden,
                addr_emb: a.addr_emb,
                value_emb: a.value_emb,
                obs_hidden: a.obs_hidden,
                obs_emb: a.obs_emb,
                seed: a.seed,
            },
        )?,
    };
    let start = Instant::now();
    let cfg = train_config(&a.train, a.seed);
    ic_train(&mut model, &program, &traces, &cfg, log_epoch)?;
    let wall = start.elapsed().as_secs_f64();
    model.save(&a.out)?;
    let loss = write_loss(&a.out, &model.meta.history)?;

    let mut m = RunManifest::new(ctx, "train-ic", a.seed);
    m.program = Some(spec);
    m.config_path = a.program.config.as_deref().map(display);
    m.inputs.push(display(&a.dataset));
    m.checkpoints.extend(a.checkpoint.as_deref().map(display));
    m.outputs = vec![display(&a.out), display(&loss)];
    m.timing = Timing::new(wall, traces.len() as u64 * u64::from(a.train.epochs));
    m.write_for(&a.out)
}
