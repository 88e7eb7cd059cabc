use std::path::PathBuf;
use std::time::Instant;

use anyhow::{bail, Result};
use clap::{Args, ValueEnum};
use psn_core::ic::{estimate, sis_infer, Executor, ProposalSource, Query, SisConfig};
use psn_core::ppl::DEFAULT_T_MAX;
use psn_core::{Error, Program};

use crate::common::{check_program, display, load_models, parse_query, ProgramArgs, RunContext};
use crate::manifest::{RunManifest, Timing};
use crate::obs::ObservationFile;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ExecutorKind {
    /// The program itself.
    Sim,
    /// A trained surrogate.
    Psn,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ProposalKind {
    Prior,
    Ic,
}

#[derive(Args, Debug)]
pub struct InferArgs {
    #[command(flatten)]
    program: ProgramArgs,
    #[arg(long, value_enum, default_value_t = ExecutorKind::Sim)]
    executor: ExecutorKind,
    #[arg(long, value_enum, default_value_t = ProposalKind::Prior)]
    proposal: ProposalKind,
    /// Surrogate and/or proposal checkpoints; the kind is read from the file.
    #[arg(long)]
    checkpoint: Vec<PathBuf>,
    /// Observation file written by `make-obs`.
    #[arg(long)]
    observations: PathBuf,
    #[arg(long, default_value_t = 1000)]
    particles: usize,
    /// mu_w, value:<addr> or present:<addr>; repeatable.
    #[arg(long, required = true)]
    query: Vec<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = DEFAULT_T_MAX)]
    t_max: usize,
    /// Report CSV.
    #[arg(long)]
    out: PathBuf,
}

pub const INFER_COLUMNS: [&str; 10] = [
    "observation_id",
    "executor",
    "proposal",
    "K",
    "query",
    "estimate",
    "bootstrap_se",
    "ess",
    "wall_seconds",
    "traces_per_second",
];

pub fn run(ctx: &RunContext, a: InferArgs) -> Result<()> {
    let (spec, program) = a.program.load()?;
    let (psn, ic) = load_models(&a.checkpoint)?;
    let obs_file = ObservationFile::load(&a.observations)?;
    if obs_file.program != program.name() {
        return Err(Error::Config(format!(
            "observations were made for {}, selected program is {}",
            obs_file.program,
            program.name()
        ))
        .into());
    }
    let executor = match a.executor {
        ExecutorKind::Sim => Executor::Program(&program),
        ExecutorKind::Psn => {
            let Some(m) = &psn else {
                bail!("--executor psn needs a surrogate --checkpoint");
            };
            check_program(m.program(), &program, "surrogate")?;
            Executor::Surrogate(m)
        }
    };
    if a.proposal == ProposalKind::Ic {
        match &ic {
            Some(m) => check_program(m.program(), &program, "proposal")?,
            None => bail!("--proposal ic needs a proposal --checkpoint"),
        }
    }
    let queries = a
        .query
        .iter()
        .map(|q| parse_query(q, &spec))
        .collect::<Result<Vec<_>>>()?;
    let query_refs: Vec<&Query<'_>> = queries.iter().map(|q| q.f.as_ref()).collect();
    let cfg = SisConfig {
        particles: a.particles,
        seed: a.seed,
        t_max: a.t_max,
        keep_traces: false,
    };

    let mut w = csv::Writer::from_path(&a.out)?;
    w.write_record(INFER_COLUMNS)?;
    let mut total = Timing::default();
    for set in &obs_file.sets {
        let summary = match a.proposal {
            ProposalKind::Ic => program.summarize(&set.observations)?,
            ProposalKind::Prior => Vec::new(),
        };
        let proposal = match (a.proposal, &ic) {
            (ProposalKind::Ic, Some(model)) => ProposalSource::Ic { model, summary: &summary },
            _ => ProposalSource::Prior,
        };
        let start = Instant::now();
        let samples = sis_infer(executor, proposal, &set.observations, &cfg, &query_refs)?;
        let timing = Timing::new(start.elapsed().as_secs_f64(), a.particles as u64);
        total.wall_seconds += timing.wall_seconds;
        total.traces += timing.traces;
        let log_w: Vec<f64> = samples.iter().map(|s| s.log_weight).collect();
        for (qi, q) in queries.iter().enumerate() {
            let values: Vec<f64> = samples.iter().map(|s| s.values[qi]).collect();
            let est = estimate(&log_w, &values, a.seed)?;
            log::info!(
                "{} {}: {:.6} ± {:.6} (ESS {:.1})",
                set.id,
                q.name,
                est.mean,
                est.bootstrap_se,
                est.ess
            );
            w.write_record([
                set.id.clone(),
                match a.executor {
                    ExecutorKind::Sim => "sim".into(),
                    ExecutorKind::Psn => "psn".into(),
                },
                proposal.name().into(),
                a.particles.to_string(),
                q.name.clone(),
                est.mean.to_string(),
                est.bootstrap_se.to_string(),
                est.ess.to_string(),
                timing.wall_seconds.to_string(),
                timing.traces_per_second.to_string(),
            ])?;
        }
    }
    w.flush()?;

    let mut m = RunManifest::new(ctx, "infer", a.seed);
    m.program = Some(spec);
    m.config_path = a.program.config.as_deref().map(display);
    m.inputs.push(display(&a.observations));
    m.checkpoints = a.checkpoint.iter().map(|p| display(p)).collect();
    m.outputs.push(display(&a.out));
    m.timing = Timing::new(total.wall_seconds, total.traces);
    m.write_for(&a.out)
}
