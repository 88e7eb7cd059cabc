//! Programs as trace emitters and the suspend/resume controller contract.
//!
//! A program calls [`Context::sample`] / [`Context::observe`] at each random
//! choice. The context suspends there, asks its driver for a value, records
//! the entry and resumes the program with that value.

use std::collections::{HashMap, HashSet};

use super::address::Address;
use super::trace::{Trace, TraceEntry};
use super::Observations;
use crate::error::{Error, Result};
use crate::numerics::{CounterRng, Distribution, Value};

pub const DEFAULT_T_MAX: usize = 4096;

/// A stochastic simulator written against [`Context`].
pub trait Program: Send + Sync {
    /// Stable family name, recorded in dataset and model manifests.
    fn name(&self) -> &str;

    fn run(&self, ctx: &mut Context<'_>) -> Result<()>;

    /// Fixed-length observation summary for inference networks. The default
    /// lists the observed values in address order.
    fn summarize(&self, observations: &Observations) -> Result<Vec<f64>> {
        Ok(observations.values().map(|v| v.as_f64()).collect())
    }
}

/// Value chosen by a controller for a latent site.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Proposal {
    pub value: Value,
    /// Log-density of `value` under the proposal, if it was drawn from one.
    pub log_q: Option<f64>,
}

/// Handler invoked whenever a program suspends at a random choice.
///
/// Latent sites go to [`Controller::propose`]; observed sites consume the
/// supplied observation and are reported through [`Controller::observed`].
/// Implementations must not carry state between traces except through
/// [`Controller::reset`], which is called before every execution.
pub trait Controller {
    fn propose(&mut self, address: &Address, dist: &Distribution) -> Result<Proposal>;

    fn observed(&mut self, _address: &Address, _dist: &Distribution, _value: Value) -> Result<()> {
        Ok(())
    }

    fn reset(&mut self) {}
}

/// Draws every latent from its own specification.
pub struct PriorController {
    rng: CounterRng,
}

impl PriorController {
    pub fn new(rng: CounterRng) -> Self {
        Self { rng }
    }
}

impl Controller for PriorController {
    fn propose(&mut self, _address: &Address, dist: &Distribution) -> Result<Proposal> {
        let value = dist.sample(&mut self.rng);
        Ok(Proposal {
            value,
            log_q: Some(dist.log_prob(value)?),
        })
    }
}

/// Fixed values at selected addresses, draws from the site specification
/// everywhere else.
pub struct ClampController<'a> {
    clamps: &'a HashMap<String, Value>,
    rng: CounterRng,
}

impl<'a> ClampController<'a> {
    pub fn new(clamps: &'a HashMap<String, Value>, rng: CounterRng) -> Self {
        Self { clamps, rng }
    }
}

impl Controller for ClampController<'_> {
    fn propose(&mut self, address: &Address, dist: &Distribution) -> Result<Proposal> {
        Ok(match self.clamps.get(&address.to_string()) {
            Some(v) => Proposal { value: *v, log_q: None },
            None => {
                let value = dist.sample(&mut self.rng);
                Proposal {
                    value,
                    log_q: Some(dist.log_prob(value)?),
                }
            }
        })
    }
}

enum Driver<'a> {
    Prior(&'a mut CounterRng),
    Guided {
        controller: &'a mut dyn Controller,
        observations: &'a Observations,
    },
    Clamped {
        rng: &'a mut CounterRng,
        clamps: &'a HashMap<String, Value>,
    },
}

pub struct Context<'a> {
    driver: Driver<'a>,
    entries: Vec<TraceEntry>,
    counters: HashMap<String, u32>,
    seen: HashSet<Address>,
    t_max: usize,
    log_q: f64,
    consumed: usize,
}

impl<'a> Context<'a> {
    fn new(driver: Driver<'a>, t_max: usize) -> Self {
        Self {
            driver,
            entries: Vec::new(),
            counters: HashMap::new(),
            seen: HashSet::new(),
            t_max,
            log_q: 0.0,
            consumed: 0,
        }
    }

    /// Number of entries recorded so far.
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    fn next_address(&mut self, label: &str) -> Result<Address> {
        if self.entries.len() >= self.t_max {
            return Err(Error::Runaway { limit: self.t_max });
        }
        let k = self.counters.entry(label.to_string()).or_insert(0);
        let address = Address::new(label, *k);
        *k += 1;
        if !self.seen.insert(address.clone()) {
            return Err(Error::DuplicateAddress(address.to_string()));
        }
        Ok(address)
    }

    fn site(&mut self, label: &str, dist: Distribution, observed: bool) -> Result<Value> {
        let address = self.next_address(label)?;
        dist.validate().map_err(|e| Error::Program {
            address: address.to_string(),
            message: e.to_string(),
        })?;
        let value = match &mut self.driver {
            Driver::Prior(rng) => dist.sample(rng),
            Driver::Clamped { rng, clamps } => match clamps.get(&address.to_string()) {
                Some(v) => *v,
                None => dist.sample(rng),
            },
            Driver::Guided {
                controller,
                observations,
            } => {
                if observed {
                    let v = observations.get(&address.to_string()).copied().ok_or_else(|| {
                        Error::Inference(format!("no observation supplied for observed site {address}"))
                    })?;
                    self.consumed += 1;
                    controller.observed(&address, &dist, v)?;
                    v
                } else {
                    let p = controller.propose(&address, &dist)?;
                    if let Some(lq) = p.log_q {
                        if lq.is_nan() {
                            return Err(Error::NonFinite {
                                what: "proposal log-density".into(),
                                location: address.to_string(),
                            });
                        }
                        self.log_q += lq;
                    }
                    p.value
                }
            }
        };
        let lp = match (&self.driver, dist.log_prob(value)) {
            // A clamp outside the support is a zero-density setting, not a failure.
            (Driver::Clamped { .. }, Err(Error::Support { .. })) => f64::NEG_INFINITY,
            (_, r) => r?,
        };
        self.entries.push(TraceEntry {
            t: self.entries.len(),
            address,
            dist,
            value,
            observed,
            lp,
            tlp: 0.0,
        });
        Ok(value)
    }

    /// Latent random choice.
    pub fn sample(&mut self, label: &str, dist: Distribution) -> Result<Value> {
        self.site(label, dist, false)
    }

    pub fn sample_real(&mut self, label: &str, dist: Distribution) -> Result<f64> {
        Ok(self.sample(label, dist)?.as_f64())
    }

    pub fn sample_index(&mut self, label: &str, dist: Distribution) -> Result<usize> {
        let v = self.sample(label, dist)?;
        v.as_index()
            .ok_or_else(|| Error::Malformed(format!("categorical site {label} produced {v}")))
    }

    /// Observed random choice. Synthetic during generation, supplied during inference.
    pub fn observe(&mut self, label: &str, dist: Distribution) -> Result<Value> {
        self.site(label, dist, true)
    }

    pub fn observe_real(&mut self, label: &str, dist: Distribution) -> Result<f64> {
        Ok(self.observe(label, dist)?.as_f64())
    }
}

fn finish<P: Program + ?Sized>(program: &P, mut ctx: Context<'_>, id: u64) -> Result<(Trace, f64, usize)> {
    program.run(&mut ctx)?;
    if ctx.entries.is_empty() {
        return Err(Error::Program {
            address: "<none>".into(),
            message: format!("program {} terminated without any random choice", program.name()),
        });
    }
    let trace = Trace::new(id, ctx.entries, 0.0);
    Ok((trace, ctx.log_q, ctx.consumed))
}

/// Execute with every site drawn from its specification.
pub fn run_prior<P: Program + ?Sized>(program: &P, rng: &mut CounterRng, id: u64, t_max: usize) -> Result<Trace> {
    let ctx = Context::new(Driver::Prior(rng), t_max);
    finish(program, ctx, id).map(|r| r.0)
}

/// Execute with the sites named in `clamps` fixed to the given values and all
/// others drawn from their specifications. Clamps outside a site's support
/// score `-inf`.
pub fn run_clamped<P: Program + ?Sized>(
    program: &P,
    clamps: &HashMap<String, Value>,
    rng: &mut CounterRng,
    id: u64,
    t_max: usize,
) -> Result<Trace> {
    let ctx = Context::new(Driver::Clamped { rng, clamps }, t_max);
    finish(program, ctx, id).map(|r| r.0)
}

#[derive(Clone, Debug)]
pub struct GuidedRun {
    pub trace: Trace,
    pub log_p: f64,
    pub log_q: f64,
    /// Supplied observations whose address was never reached.
    pub unused_observations: usize,
}

/// Execute with latents chosen by `controller` and observed sites fixed to
/// `observations`. Importance weights are left to the caller.
pub fn run_guided<P: Program + ?Sized>(
    program: &P,
    controller: &mut dyn Controller,
    observations: &Observations,
    id: u64,
    t_max: usize,
) -> Result<GuidedRun> {
    controller.reset();
    let ctx = Context::new(
        Driver::Guided {
            controller,
            observations,
        },
        t_max,
    );
    let (trace, log_q, consumed) = finish(program, ctx, id)?;
    Ok(GuidedRun {
        log_p: trace.log_joint,
        log_q,
        unused_observations: observations.len().saturating_sub(consumed),
        trace,
    })
}
