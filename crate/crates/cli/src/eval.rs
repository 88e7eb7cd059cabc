use std::collections::{BTreeMap, HashMap};
use std::path::PathBuf;
use std::time::Instant;

use anyhow::{bail, Result};
use clap::Args;
use psn_core::numerics::rng::stream_id;
use psn_core::ppl::{run_clamped, ClampController, DEFAULT_T_MAX};
use psn_core::sims::{ProgramSpec, Regime};
use psn_core::surrogate::{run_surrogate, MissingObservation};
use psn_core::{Address, CounterRng, Error, Observations, Program, SurrogateModel, Trace, Value};
use rayon::prelude::*;
use serde::Serialize;

use crate::common::{check_program, display, load_models, parse_settings, ProgramArgs, RunContext};
use crate::manifest::{RunManifest, Timing};
use crate::obs::warn_out_of_support;
use crate::sibling;

/// Squared error of conditional means below which a coordinate counts as matched (°C²).
pub const MEAN_ERROR_THRESHOLD: f64 = 1.0;
/// Allowed ratio of surrogate error to the simulator-vs-itself control.
pub const CONTROL_RATIO: f64 = 3.0;

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[command(flatten)]
    program: ProgramArgs,
    /// Surrogate checkpoint.
    #[arg(long)]
    checkpoint: PathBuf,
    /// Heat1d settings regime (low, nominal, high).
    #[arg(long)]
    regime: Option<String>,
    /// Fixed setting `addr=value`; repeatable, applied after --regime.
    #[arg(long = "set")]
    settings: Vec<String>,
    /// Draws per group.
    #[arg(long, default_value_t = 500)]
    draws: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Per-coordinate CSV; the summary goes to `<out>.summary.json`.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, Debug, Default)]
struct Moments {
    n: usize,
    mean: f64,
    var: f64,
}

/// Sample mean and unbiased variance, or `None` if any draw lacks the address.
fn moments(draws: &[Trace], addr: &str) -> Option<Moments> {
    let xs: Vec<f64> = draws
        .iter()
        .map(|t| t.value_of(addr).map(|v| v.as_f64()))
        .collect::<Option<_>>()?;
    let n = xs.len();
    let mean = xs.iter().sum::<f64>() / n as f64;
    let var = if n > 1 {
        xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64
    } else {
        0.0
    };
    Some(Moments { n, mean, var })
}

#[derive(Debug, Serialize)]
struct Summary {
    draws: u64,
    coordinates: usize,
    /// Addresses missing from some draw and left out of the comparison.
    skipped: Vec<String>,
    mean_error_threshold: f64,
    fraction_mean_error_below_threshold: f64,
    control_ratio: f64,
    fraction_within_control_ratio: f64,
    median_sq_err_mean: f64,
    median_control_sq_err_mean: f64,
    max_sq_err_mean: f64,
}

fn median(mut xs: Vec<f64>) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

fn simulate(program: &dyn Program, clamps: &HashMap<String, Value>, seed: u64, group: &str, n: u64) -> Result<Vec<Trace>> {
    let base = CounterRng::new(seed, stream_id(group));
    Ok((0..n)
        .into_par_iter()
        .map(|i| run_clamped(program, clamps, &mut base.split(i), i, DEFAULT_T_MAX))
        .collect::<psn_core::Result<_>>()?)
}

fn surrogate_draws(model: &SurrogateModel, clamps: &HashMap<String, Value>, seed: u64, n: u64) -> Result<Vec<Trace>> {
    // Observed settings condition the surrogate; latent ones are clamped.
    let reg = model.registry();
    let mut latent = HashMap::new();
    let mut observed = Observations::new();
    for (k, v) in clamps {
        let site = reg
            .lookup(&k.parse::<Address>()?)
            .ok_or_else(|| Error::Config(format!("setting {k} is not known to the surrogate")))?;
        if reg.site(site).schema.observed {
            observed.insert(k.clone(), *v);
        } else {
            latent.insert(k.clone(), *v);
        }
    }
    let base = CounterRng::new(seed, stream_id("eval-psn"));
    Ok((0..n)
        .into_par_iter()
        .map(|i| {
            let rng = base.split(i);
            let mut ctl = ClampController::new(&latent, rng.split(1));
            let mut flow = rng.split(0);
            run_surrogate(model, &mut ctl, &observed, MissingObservation::Sample, &mut flow, i).map(|r| r.trace)
        })
        .collect::<psn_core::Result<_>>()?)
}

pub fn run(ctx: &RunContext, a: EvalArgs) -> Result<()> {
    let (spec, program) = a.program.load()?;
    let (psn, _) = load_models(std::slice::from_ref(&a.checkpoint))?;
    let Some(model) = psn else {
        bail!("{} is not a surrogate checkpoint", a.checkpoint.display());
    };
    check_program(model.program(), &program, "surrogate")?;
    if a.draws < 2 {
        bail!("--draws must be at least 2");
    }
    let mut clamps = HashMap::new();
    if let Some(r) = &a.regime {
        let ProgramSpec::Heat1d(cfg) = &spec else {
            bail!("--regime applies to heat1d programs only");
        };
        clamps = r.parse::<Regime>()?.settings(cfg);
    }
    clamps.extend(parse_settings(&a.settings)?);

    let start = Instant::now();
    let sim = simulate(&program, &clamps, a.seed, "eval-sim", a.draws)?;
    let control = simulate(&program, &clamps, a.seed, "eval-control", a.draws)?;
    if let Some(t) = sim.first() {
        warn_out_of_support(t, &clamps);
    }
    let surrogate = surrogate_draws(&model, &clamps, a.seed, a.draws)?;
    let wall = start.elapsed().as_secs_f64();

    // Coordinates in first-seen order across the simulator draws.
    let mut order: Vec<Address> = Vec::new();
    let mut seen = BTreeMap::new();
    for t in &sim {
        for e in &t.entries {
            if !clamps.contains_key(&e.address.to_string()) && seen.insert(e.address.clone(), ()).is_none() {
                order.push(e.address.clone());
            }
        }
    }

    let mut w = csv::Writer::from_path(&a.out)?;
    w.write_record([
        "address",
        "channel",
        "step",
        "sim_mean",
        "sim_var",
        "psn_mean",
        "psn_var",
        "control_mean",
        "control_var",
        "sq_err_mean",
        "sq_err_var",
        "control_sq_err_mean",
        "control_sq_err_var",
    ])?;
    let (mut errs, mut controls, mut skipped) = (Vec::new(), Vec::new(), Vec::new());
    let mut within = 0usize;
    for addr in &order {
        let key = addr.to_string();
        let (Some(s), Some(p), Some(c)) = (moments(&sim, &key), moments(&surrogate, &key), moments(&control, &key)) else {
            skipped.push(key);
            continue;
        };
        debug_assert_eq!(s.n, p.n);
        let err = (p.mean - s.mean).powi(2);
        let ctl = (c.mean - s.mean).powi(2);
        if err <= CONTROL_RATIO * ctl {
            within += 1;
        }
        w.write_record([
            key,
            addr.label.clone(),
            addr.instance.to_string(),
            s.mean.to_string(),
            s.var.to_string(),
            p.mean.to_string(),
            p.var.to_string(),
            c.mean.to_string(),
            c.var.to_string(),
            err.to_string(),
            (p.var - s.var).powi(2).to_string(),
            ctl.to_string(),
            (c.var - s.var).powi(2).to_string(),
        ])?;
        errs.push(err);
        controls.push(ctl);
    }
    w.flush()?;
    let n = errs.len();
    let frac = |k: usize| if n == 0 { f64::NAN } else { k as f64 / n as f64 };
    let summary = Summary {
        draws: a.draws,
        coordinates: n,
        skipped,
        mean_error_threshold: MEAN_ERROR_THRESHOLD,
        fraction_mean_error_below_threshold: frac(errs.iter().filter(|e| **e < MEAN_ERROR_THRESHOLD).count()),
        control_ratio: CONTROL_RATIO,
        fraction_within_control_ratio: frac(within),
        median_sq_err_mean: median(errs.clone()),
        median_control_sq_err_mean: median(controls),
        max_sq_err_mean: errs.iter().copied().fold(f64::NAN, f64::max),
    };
    let summary_path = sibling(&a.out, ".summary.json");
    std::fs::write(&summary_path, serde_json::to_string_pretty(&summary)? + "\n")?;

    let mut m = RunManifest::new(ctx, "eval-surrogate", a.seed);
    m.program = Some(spec);
    m.config_path = a.program.config.as_deref().map(display);
    m.checkpoints.push(display(&a.checkpoint));
    m.outputs = vec![display(&a.out), display(&summary_path)];
    m.timing = Timing::new(wall, 3 * a.draws);
    m.write_for(&a.out)
}
