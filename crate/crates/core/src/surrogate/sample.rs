//! Running the surrogate as a program: forward sampling and controller-driven
//! execution with the same contract as [`crate::ppl::run_guided`].

use super::model::{Cursor, SurrogateModel};
use super::registry::Next;
use crate::error::{Error, Result};
use crate::numerics::dist::log_softmax_at;
use crate::numerics::{softmax, CounterRng, Distribution};
use crate::ppl::{Controller, Observations, PriorController, Trace, TraceEntry};

/// What to do at an observed site whose address has no supplied value.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MissingObservation {
    Fail,
    /// Draw it from the surrogate (forward sampling).
    Sample,
}

#[derive(Clone, Debug)]
pub struct SurrogateRun {
    pub trace: Trace,
    /// Surrogate joint log-density, transitions included.
    pub log_s: f64,
    /// Proposal log-density. Transition scores are added here as well, since
    /// the proposal reuses the surrogate's control flow.
    pub log_q: f64,
    /// Supplied observation addresses the run never reached.
    pub unreached: Vec<String>,
}

/// Drive the surrogate with `controller` choosing latent values.
///
/// Address transitions are sampled from the transition heads with `rng`.
pub fn run_surrogate(
    model: &SurrogateModel,
    controller: &mut dyn Controller,
    observations: &Observations,
    missing: MissingObservation,
    rng: &mut CounterRng,
    id: u64,
) -> Result<SurrogateRun> {
    let reg = model.registry();
    for key in observations.keys() {
        let a = key.parse()?;
        if reg.lookup(&a).is_none() {
            return Err(Error::Inference(format!("observation address {key} is not known to the surrogate")));
        }
    }
    controller.reset();
    let t_max = model.config().t_max;
    let mut cur = Cursor::new(model);
    let mut entries: Vec<TraceEntry> = Vec::new();
    let mut log_q = 0.0;
    let mut consumed = std::collections::HashSet::new();
    loop {
        let succ = reg.successors(cur.prev);
        if succ.is_empty() {
            let from = cur.prev.map_or("START".to_string(), |i| reg.site(i).address.to_string());
            return Err(Error::Coverage(format!("address {from} has no registered successor")));
        }
        let logits = cur.transition_logits();
        let k = Distribution::Categorical { probs: softmax(&logits) }
            .sample(rng)
            .as_index()
            .expect("categorical draw");
        let tlp = log_softmax_at(&logits, k);
        log_q += tlp;
        let site = match succ[k] {
            Next::End => {
                let unreached = observations
                    .keys()
                    .filter(|key| !consumed.contains(*key))
                    .cloned()
                    .collect::<Vec<_>>();
                if !unreached.is_empty() {
                    log::warn!("observations never reached: {}", unreached.join(", "));
                }
                let trace = Trace::new(id, entries, tlp);
                return Ok(SurrogateRun {
                    log_s: trace.log_joint,
                    log_q,
                    trace,
                    unreached,
                });
            }
            Next::Site(i) => i,
        };
        if entries.len() >= t_max {
            return Err(Error::Runaway { limit: t_max });
        }
        let rec = reg.site(site);
        let dist = cur.site_distribution(site);
        let key = rec.address.to_string();
        let value = if rec.schema.observed {
            match observations.get(&key) {
                Some(v) => {
                    consumed.insert(key);
                    controller.observed(&rec.address, &dist, *v)?;
                    *v
                }
                None if missing == MissingObservation::Sample => {
                    // Drawn from the surrogate itself, so it is part of the proposal.
                    let v = dist.sample(rng);
                    log_q += dist.log_prob(v)?;
                    v
                }
                None => {
                    return Err(Error::Inference(format!(
                        "no observation supplied for observed site {}",
                        rec.address
                    )))
                }
            }
        } else {
            let p = controller.propose(&rec.address, &dist)?;
            if let Some(lq) = p.log_q {
                if lq.is_nan() {
                    return Err(Error::NonFinite {
                        what: "proposal log-density".into(),
                        location: key,
                    });
                }
                log_q += lq;
            }
            p.value
        };
        let lp = dist.log_prob(value)?;
        cur.consume(site, value)?;
        entries.push(TraceEntry {
            t: entries.len(),
            address: rec.address.clone(),
            dist,
            value,
            observed: rec.schema.observed,
            lp,
            tlp,
        });
    }
}

/// Forward-sample one trace from the surrogate.
pub fn psn_sample(model: &SurrogateModel, rng: &mut CounterRng, id: u64) -> Result<Trace> {
    let mut values = PriorController::new(rng.split(1));
    let mut flow = rng.split(0);
    run_surrogate(
        model,
        &mut values,
        &Observations::new(),
        MissingObservation::Sample,
        &mut flow,
        id,
    )
    .map(|r| r.trace)
}
