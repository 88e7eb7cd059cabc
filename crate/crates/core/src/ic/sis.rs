//! Self-normalized importance sampling with the program or the surrogate as
//! executor and either the prior or a trained proposal as controller.

use rayon::prelude::*;

use super::controller::IcController;
use super::model::ProposalModel;
use crate::error::{Error, Result};
use crate::numerics::CounterRng;
use crate::ppl::{run_guided, Controller, Observations, PriorController, Program, Trace};
use crate::surrogate::{run_surrogate, MissingObservation, SurrogateModel};

#[derive(Clone, Copy)]
pub enum Executor<'a> {
    Program(&'a dyn Program),
    Surrogate(&'a SurrogateModel),
}

impl Executor<'_> {
    pub fn name(&self) -> &'static str {
        match self {
            Executor::Program(_) => "program",
            Executor::Surrogate(_) => "surrogate",
        }
    }
}

#[derive(Clone, Copy)]
pub enum ProposalSource<'a> {
    Prior,
    /// A trained proposal together with the observation summary it is
    /// conditioned on.
    Ic { model: &'a ProposalModel, summary: &'a [f64] },
}

impl ProposalSource<'_> {
    pub fn name(&self) -> &'static str {
        match self {
            ProposalSource::Prior => "prior",
            ProposalSource::Ic { .. } => "ic",
        }
    }
}

#[derive(Clone, Debug)]
pub struct SisConfig {
    pub particles: usize,
    pub seed: u64,
    pub t_max: usize,
    /// Keep each particle's trace in its sample.
    pub keep_traces: bool,
}

impl Default for SisConfig {
    fn default() -> Self {
        Self {
            particles: 1000,
            seed: 0,
            t_max: crate::ppl::DEFAULT_T_MAX,
            keep_traces: false,
        }
    }
}

#[derive(Clone, Debug)]
pub struct WeightedSample {
    /// Unnormalized log weight, `log p - log q` (`log s - log q` in the surrogate).
    pub log_weight: f64,
    pub log_p: f64,
    pub log_q: f64,
    /// Query values in the order the queries were given.
    pub values: Vec<f64>,
    pub trace: Option<Trace>,
}

pub type Query<'q> = dyn Fn(&Trace) -> Result<f64> + Sync + 'q;

fn controller<'a>(proposal: &ProposalSource<'a>, rng: CounterRng) -> Result<Box<dyn Controller + 'a>> {
    Ok(match *proposal {
        ProposalSource::Prior => Box::new(PriorController::new(rng)),
        ProposalSource::Ic { model, summary } => Box::new(IcController::new(model, summary, rng)?),
    })
}

fn particle(
    executor: Executor<'_>,
    proposal: &ProposalSource<'_>,
    observations: &Observations,
    cfg: &SisConfig,
    queries: &[&Query<'_>],
    k: u64,
) -> Result<WeightedSample> {
    let rng = CounterRng::new(cfg.seed, k);
    let mut ctl = controller(proposal, rng.split(1))?;
    let (trace, log_p, log_q) = match executor {
        Executor::Program(p) => {
            let run = run_guided(p, ctl.as_mut(), observations, k, cfg.t_max)?;
            if run.unused_observations > 0 {
                return Err(Error::Inference(format!(
                    "{} supplied observations were never reached by the program",
                    run.unused_observations
                )));
            }
            (run.trace, run.log_p, run.log_q)
        }
        Executor::Surrogate(m) => {
            let mut flow = rng.split(0);
            let run = run_surrogate(m, ctl.as_mut(), observations, MissingObservation::Fail, &mut flow, k)?;
            (run.trace, run.log_s, run.log_q)
        }
    };
    let log_weight = log_p - log_q;
    if log_weight.is_nan() || log_weight == f64::INFINITY {
        return Err(Error::NonFinite {
            what: "importance weight".into(),
            location: format!("particle {k}"),
        });
    }
    let values = queries.iter().map(|q| q(&trace)).collect::<Result<Vec<_>>>()?;
    Ok(WeightedSample {
        log_weight,
        log_p,
        log_q,
        values,
        trace: cfg.keep_traces.then_some(trace),
    })
}

/// Run `cfg.particles` independent guided executions conditioned on
/// `observations` and return their weighted samples in particle order.
///
/// Particle `k` draws from stream `k` of `cfg.seed`, so results do not depend
/// on the number of worker threads.
pub fn sis_infer(
    executor: Executor<'_>,
    proposal: ProposalSource<'_>,
    observations: &Observations,
    cfg: &SisConfig,
    queries: &[&Query<'_>],
) -> Result<Vec<WeightedSample>> {
    if cfg.particles == 0 {
        return Err(Error::Config("number of particles must be at least 1".into()));
    }
    let samples: Vec<WeightedSample> = (0..cfg.particles as u64)
        .into_par_iter()
        .map(|k| particle(executor, &proposal, observations, cfg, queries, k))
        .collect::<Result<_>>()?;
    if samples.iter().all(|s| s.log_weight == f64::NEG_INFINITY) {
        return Err(Error::Degenerate(format!(
            "all {} particles have zero weight",
            samples.len()
        )));
    }
    Ok(samples)
}
