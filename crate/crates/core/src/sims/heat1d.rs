//! Through-thickness heat transfer in a part cured on a tool plate.
//!
//! Nodes run from the part's top surface (index 0) down to the tool's
//! bottom surface (index N-1). Both layers are split into fixed interval
//! counts, so the part spacing follows the sampled thickness. Explicit
//! finite volumes with convection at both surfaces and first-order cure
//! kinetics in the part.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Distribution;
use crate::ppl::{Context, Observations, Program, Trace};

pub const KELVIN: f64 = 273.15;
/// Temperatures above this are treated as a diverged solve.
pub const MAX_TEMPERATURE: f64 = 1000.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Range {
    pub low: f64,
    pub high: f64,
}

impl Range {
    pub fn quantile(&self, q: f64) -> f64 {
        self.low + q * (self.high - self.low)
    }

    fn valid(&self) -> bool {
        self.low.is_finite() && self.high.is_finite() && self.low < self.high
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CureKinetics {
    /// Pre-exponential factor A (1/s).
    pub pre_exponential: f64,
    /// Activation energy over the gas constant, E/R (K).
    pub activation_ratio: f64,
    /// Adiabatic temperature rise of full cure, Q/c (°C).
    pub heat_rise: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Heat1dConfig {
    /// Node count N.
    pub nodes: usize,
    /// Intervals in the part layer; the remaining N-1-part_intervals are tool.
    pub part_intervals: usize,
    /// Recorded time steps M.
    pub steps: usize,
    /// Seconds between recorded steps.
    pub record_interval: f64,
    /// Solver time step Δt (s); must divide `record_interval`.
    pub dt: f64,
    pub tool_thickness: f64,
    pub kappa_tool: f64,
    pub rho_c_tool: f64,
    pub kappa_part: f64,
    pub rho_c_part: f64,
    pub h_top: Range,
    pub h_bot: Range,
    pub thickness: Range,
    /// Air temperature schedules as (step, °C) breakpoints, one per config id.
    pub schedules: Vec<Vec<[f64; 2]>>,
    pub cure: CureKinetics,
    pub initial_temperature: f64,
    pub sigma_proc: f64,
    pub sigma_obs: f64,
    /// Tracked node, counted from the top surface.
    pub depth_index: usize,
    /// Query window, 1-based inclusive recorded steps.
    pub window: [usize; 2],
}

fn schedule(hold: f64, pts: &[(f64, f64)]) -> Vec<[f64; 2]> {
    pts.iter().map(|&(s, t)| [s, if t < 0.0 { hold } else { t }]).collect()
}

impl Heat1dConfig {
    /// Desk-scale preset: N = 24, M = 180.
    pub fn small() -> Self {
        let pts = [(0.0, 20.0), (40.0, 120.0), (70.0, 120.0), (100.0, -1.0), (150.0, -1.0), (180.0, 60.0)];
        Self {
            nodes: 24,
            part_intervals: 16,
            steps: 180,
            record_interval: 60.0,
            dt: 0.5,
            tool_thickness: 0.01,
            kappa_tool: 1.5e-6,
            rho_c_tool: 4.0e6,
            kappa_part: 4.0e-7,
            rho_c_part: 1.8e6,
            h_top: Range { low: 20.0, high: 80.0 },
            h_bot: Range { low: 20.0, high: 80.0 },
            thickness: Range { low: 0.015, high: 0.025 },
            schedules: [170.0, 180.0, 190.0].iter().map(|&h| schedule(h, &pts)).collect(),
            cure: CureKinetics {
                pre_exponential: 2.6e4,
                activation_ratio: 8000.0,
                heat_rise: 40.0,
            },
            initial_temperature: 20.0,
            sigma_proc: 0.1,
            sigma_obs: 0.25,
            depth_index: 8,
            window: [131, 140],
        }
    }

    /// Benchmark preset: N = 64, M = 240.
    pub fn large() -> Self {
        let pts = [(0.0, 20.0), (50.0, 120.0), (90.0, 120.0), (130.0, -1.0), (200.0, -1.0), (240.0, 60.0)];
        Self {
            nodes: 64,
            part_intervals: 42,
            steps: 240,
            dt: 0.06,
            schedules: [170.0, 180.0, 190.0].iter().map(|&h| schedule(h, &pts)).collect(),
            depth_index: 21,
            window: [181, 190],
            ..Self::small()
        }
    }

    /// Same physics on a grid with twice the intervals (and a quarter of the
    /// time step, keeping the stability ratio).
    pub fn refined(&self) -> Self {
        Self {
            nodes: 2 * (self.nodes - 1) + 1,
            part_intervals: 2 * self.part_intervals,
            dt: self.dt / 4.0,
            depth_index: 2 * self.depth_index,
            ..self.clone()
        }
    }

    pub fn tool_intervals(&self) -> usize {
        self.nodes - 1 - self.part_intervals
    }

    pub fn substeps(&self) -> usize {
        (self.record_interval / self.dt).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.nodes < 3 || self.part_intervals == 0 || self.part_intervals + 1 >= self.nodes {
            return bad(format!(
                "need at least one part and one tool interval, got N={} with {} part intervals",
                self.nodes, self.part_intervals
            ));
        }
        if self.steps == 0 {
            return bad("M must be positive".into());
        }
        let positive = [
            self.record_interval,
            self.dt,
            self.tool_thickness,
            self.kappa_tool,
            self.rho_c_tool,
            self.kappa_part,
            self.rho_c_part,
            self.sigma_proc,
            self.sigma_obs,
            self.cure.pre_exponential,
            self.cure.activation_ratio,
        ];
        if positive.iter().any(|v| !(v.is_finite() && *v > 0.0)) || !(self.cure.heat_rise >= 0.0) {
            return bad("physical constants, time steps and noise levels must be positive".into());
        }
        let sub = self.record_interval / self.dt;
        if (sub - sub.round()).abs() > 1e-9 * sub {
            return bad(format!("dt {} does not divide the record interval {}", self.dt, self.record_interval));
        }
        if !(self.h_top.valid() && self.h_bot.valid() && self.thickness.valid()) || self.h_top.low < 0.0 || self.h_bot.low < 0.0 || self.thickness.low <= 0.0 {
            return bad("prior ranges must be ordered, finite and physical".into());
        }
        if self.schedules.is_empty() {
            return bad("at least one air schedule is required".into());
        }
        for (k, s) in self.schedules.iter().enumerate() {
            if s.is_empty() || s.windows(2).any(|w| w[1][0] <= w[0][0]) || s.iter().any(|p| !p[0].is_finite() || !p[1].is_finite()) {
                return bad(format!("schedule {k} needs finite breakpoints in increasing step order"));
            }
        }
        if self.depth_index >= self.nodes {
            return bad(format!("depth index {} outside 0..{}", self.depth_index, self.nodes));
        }
        if self.window[0] < 1 || self.window[0] > self.window[1] || self.window[1] > self.steps {
            return bad(format!("window {:?} not within [1, {}]", self.window, self.steps));
        }
        // Worst case over the prior: thinnest part, strongest convection.
        let g = Geometry::new(self, self.thickness.low);
        let ratio = g.max_stability_ratio(self, self.h_top.high, self.h_bot.high);
        if ratio > 1.0 {
            return bad(format!(
                "explicit scheme unstable: dt·ΣG/C reaches {ratio:.3} (> 1; equivalently κΔt/Δx² > 0.5); reduce dt"
            ));
        }
        Ok(())
    }

    /// Air temperature of schedule `id` at fractional step `s`.
    pub fn air(&self, id: usize, s: f64) -> f64 {
        interpolate(&self.schedules[id], s)
    }

    /// Inputs at prior quantile `q` of each uniform prior.
    pub fn inputs_at_quantile(&self, q: f64) -> Inputs {
        Inputs {
            h_top: self.h_top.quantile(q),
            h_bot: self.h_bot.quantile(q),
            thickness: self.thickness.quantile(q),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let c: Self = serde_json::from_str(text)?;
        c.validate()?;
        Ok(c)
    }
}

pub fn interpolate(pts: &[[f64; 2]], s: f64) -> f64 {
    if s <= pts[0][0] {
        return pts[0][1];
    }
    for w in pts.windows(2) {
        let ([s0, t0], [s1, t1]) = (w[0], w[1]);
        if s <= s1 {
            return t0 + (t1 - t0) * (s - s0) / (s1 - s0);
        }
    }
    pts[pts.len() - 1][1]
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Inputs {
    pub h_top: f64,
    pub h_bot: f64,
    pub thickness: f64,
}

/// Node capacities, interval conductances and cure heat shares.
#[derive(Clone, Debug)]
struct Geometry {
    /// Heat capacity per unit area of each node's control volume (J/m²K).
    cap: Vec<f64>,
    /// Conductance of the interval between node i and i+1 (W/m²K).
    cond: Vec<f64>,
    /// Fraction of each node's capacity that is curing part material.
    part_share: Vec<f64>,
}

impl Geometry {
    fn new(cfg: &Heat1dConfig, thickness: f64) -> Self {
        let n = cfg.nodes;
        let p = cfg.part_intervals;
        let dx_p = thickness / p as f64;
        let dx_t = cfg.tool_thickness / cfg.tool_intervals() as f64;
        let mut cap = vec![0.0; n];
        let mut part_cap = vec![0.0; n];
        let mut cond = vec![0.0; n - 1];
        for (i, c) in cond.iter_mut().enumerate() {
            let (dx, kappa, rc) = if i < p {
                (dx_p, cfg.kappa_part, cfg.rho_c_part)
            } else {
                (dx_t, cfg.kappa_tool, cfg.rho_c_tool)
            };
            *c = kappa * rc / dx;
            let half = 0.5 * rc * dx;
            cap[i] += half;
            cap[i + 1] += half;
            if i < p {
                part_cap[i] += half;
                part_cap[i + 1] += half;
            }
        }
        let part_share = part_cap.iter().zip(&cap).map(|(a, b)| a / b).collect();
        Self { cap, cond, part_share }
    }

    fn max_stability_ratio(&self, cfg: &Heat1dConfig, h_top: f64, h_bot: f64) -> f64 {
        let n = self.cap.len();
        (0..n)
            .map(|i| {
                let mut g = 0.0;
                if i > 0 {
                    g += self.cond[i - 1];
                }
                if i + 1 < n {
                    g += self.cond[i];
                }
                if i == 0 {
                    g += h_top;
                }
                if i + 1 == n {
                    g += h_bot;
                }
                cfg.dt * g / self.cap[i]
            })
            .fold(0.0, f64::max)
    }
}

/// Deterministic solver state for one set of inputs and one schedule.
pub struct Solver<'c> {
    cfg: &'c Heat1dConfig,
    schedule: usize,
    inputs: Inputs,
    rate: Vec<f64>,
    cond: Vec<f64>,
    heat: Vec<f64>,
    temp: Vec<f64>,
    next: Vec<f64>,
    alpha: Vec<f64>,
    step: usize,
}

impl<'c> Solver<'c> {
    pub fn new(cfg: &'c Heat1dConfig, inputs: Inputs, schedule: usize) -> Result<Self> {
        if schedule >= cfg.schedules.len() {
            return Err(Error::Config(format!("schedule id {schedule} out of range")));
        }
        let g = Geometry::new(cfg, inputs.thickness);
        let n = cfg.nodes;
        Ok(Self {
            cfg,
            schedule,
            inputs,
            rate: g.cap.iter().map(|c| cfg.dt / c).collect(),
            heat: g.part_share.iter().map(|s| s * cfg.cure.heat_rise).collect(),
            cond: g.cond,
            temp: vec![cfg.initial_temperature; n],
            next: vec![0.0; n],
            alpha: vec![0.0; cfg.part_intervals + 1],
            step: 0,
        })
    }

    pub fn temperatures(&self) -> &[f64] {
        &self.temp
    }

    pub fn set_temperatures(&mut self, t: &[f64]) {
        self.temp.copy_from_slice(t);
    }

    pub fn degree_of_cure(&self) -> &[f64] {
        &self.alpha
    }

    /// One explicit solver step with air temperature `air`.
    pub fn substep(&mut self, air: f64) {
        let n = self.temp.len();
        let t = &self.temp;
        let c = &self.cfg.cure;
        let dt = self.cfg.dt;
        for i in 0..n {
            let mut flux = 0.0;
            if i > 0 {
                flux += self.cond[i - 1] * (t[i - 1] - t[i]);
            }
            if i + 1 < n {
                flux += self.cond[i] * (t[i + 1] - t[i]);
            }
            if i == 0 {
                flux += self.inputs.h_top * (air - t[i]);
            }
            if i + 1 == n {
                flux += self.inputs.h_bot * (air - t[i]);
            }
            self.next[i] = t[i] + self.rate[i] * flux;
        }
        for (i, a) in self.alpha.iter_mut().enumerate() {
            let d_alpha = dt * c.pre_exponential * (-c.activation_ratio / (t[i] + KELVIN)).exp() * (1.0 - *a);
            *a += d_alpha;
            self.next[i] += self.heat[i] * d_alpha;
        }
        std::mem::swap(&mut self.temp, &mut self.next);
    }

    /// Integrate one recorded interval; the air temperature is sampled from
    /// the schedule at the start of each solver step.
    pub fn advance(&mut self) -> Result<()> {
        let sub = self.cfg.substeps();
        for s in 0..sub {
            let air = self.cfg.air(self.schedule, self.step as f64 + s as f64 / sub as f64);
            self.substep(air);
        }
        self.step += 1;
        if let Some(bad) = self.temp.iter().find(|v| !(v.is_finite() && v.abs() <= MAX_TEMPERATURE)) {
            return Err(Error::Solver {
                step: self.step,
                message: format!("non-physical temperature {bad}"),
            });
        }
        Ok(())
    }
}

/// Noise-free trajectories of the tracked node and the bottom surface.
pub fn solve(cfg: &Heat1dConfig, inputs: Inputs, schedule: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut s = Solver::new(cfg, inputs, schedule)?;
    let mut tint = Vec::with_capacity(cfg.steps);
    let mut tbot = Vec::with_capacity(cfg.steps);
    for _ in 0..cfg.steps {
        s.advance()?;
        tint.push(s.temp[cfg.depth_index]);
        tbot.push(s.temp[cfg.nodes - 1]);
    }
    Ok((tint, tbot))
}

#[derive(Clone, Debug)]
pub struct Heat1d {
    pub config: Heat1dConfig,
}

impl Heat1d {
    pub fn new(config: Heat1dConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self { config })
    }
}

/// Bin means of `xs` into `bins` equal-width index bins.
pub fn downsample(xs: &[f64], bins: usize) -> Vec<f64> {
    let n = xs.len();
    (0..bins)
        .map(|j| {
            let lo = j * n / bins;
            let hi = ((j + 1) * n / bins).max(lo + 1).min(n);
            xs[lo..hi].iter().sum::<f64>() / (hi - lo) as f64
        })
        .collect()
}

pub const SUMMARY_BOTTOM_POINTS: usize = 32;
pub const SUMMARY_AIR_POINTS: usize = 16;

impl Program for Heat1d {
    fn name(&self) -> &str {
        "heat1d"
    }

    fn run(&self, ctx: &mut Context<'_>) -> Result<()> {
        let c = &self.config;
        let inputs = Inputs {
            h_top: ctx.sample_real("h_top", Distribution::uniform(c.h_top.low, c.h_top.high))?,
            h_bot: ctx.sample_real("h_bot", Distribution::uniform(c.h_bot.low, c.h_bot.high))?,
            thickness: ctx.sample_real("thick", Distribution::uniform(c.thickness.low, c.thickness.high))?,
        };
        let k = c.schedules.len();
        let id = ctx
            .observe("cfg", Distribution::categorical(vec![1.0 / k as f64; k]))?
            .as_index()
            .ok_or_else(|| Error::Malformed("config id must be a category index".into()))?;
        let mut solver = Solver::new(c, inputs, id)?;
        for m in 0..c.steps {
            solver.advance()?;
            let t = solver.temperatures();
            let (tint, tbot) = (t[c.depth_index], t[c.nodes - 1]);
            ctx.observe("Tair", Distribution::normal(c.air(id, (m + 1) as f64), c.sigma_obs))?;
            ctx.sample("Tint", Distribution::normal(tint, c.sigma_proc))?;
            ctx.observe("Tbot", Distribution::normal(tbot, c.sigma_obs))?;
        }
        Ok(())
    }

    /// Bottom series in 32 bins, air series in 16 bins, one-hot config id.
    fn summarize(&self, obs: &Observations) -> Result<Vec<f64>> {
        let c = &self.config;
        let series = |label: &str| -> Result<Vec<f64>> {
            (0..c.steps)
                .map(|m| {
                    let key = format!("{label}__{m}");
                    obs.get(&key)
                        .map(|v| v.as_f64())
                        .ok_or_else(|| Error::Inference(format!("observation {key} missing")))
                })
                .collect()
        };
        let mut out = downsample(&series("Tbot")?, SUMMARY_BOTTOM_POINTS);
        out.extend(downsample(&series("Tair")?, SUMMARY_AIR_POINTS));
        let id = obs
            .get("cfg__0")
            .and_then(|v| v.as_index())
            .filter(|k| *k < c.schedules.len())
            .ok_or_else(|| Error::Inference("observation cfg__0 missing or invalid".into()))?;
        let mut one_hot = vec![0.0; c.schedules.len()];
        one_hot[id] = 1.0;
        out.extend(one_hot);
        Ok(out)
    }
}

/// Window mean of the tracked internal temperature.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QueryMuW {
    pub depth_index: usize,
    /// 1-based inclusive steps.
    pub window: [usize; 2],
}

impl QueryMuW {
    pub fn from_config(c: &Heat1dConfig) -> Self {
        Self {
            depth_index: c.depth_index,
            window: c.window,
        }
    }
}

pub fn mu_w(trace: &Trace, q: &QueryMuW) -> Result<f64> {
    let [lo, hi] = q.window;
    if lo < 1 || lo > hi {
        return Err(Error::Query(format!("empty or invalid window {:?}", q.window)));
    }
    let mut sum = 0.0;
    for m in lo..=hi {
        let key = format!("Tint__{}", m - 1);
        sum += trace
            .value_of(&key)
            .ok_or_else(|| Error::Query(format!("trace {} lacks {key}", trace.id)))?
            .as_f64();
    }
    Ok(sum / (hi - lo + 1) as f64)
}

/// Observation regimes with inputs at low, median and high prior quantiles.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    Low,
    Nominal,
    High,
}

impl Regime {
    pub const ALL: [Regime; 3] = [Regime::Low, Regime::Nominal, Regime::High];

    pub fn quantile(self) -> f64 {
        match self {
            Regime::Low => 0.1,
            Regime::Nominal => 0.5,
            Regime::High => 0.9,
        }
    }

    pub fn schedule(self) -> usize {
        match self {
            Regime::Low => 0,
            Regime::Nominal => 1,
            Regime::High => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Regime::Low => "low",
            Regime::Nominal => "nominal",
            Regime::High => "high",
        }
    }

    /// Clamps fixing the inputs and config id of this regime.
    pub fn settings(self, cfg: &Heat1dConfig) -> std::collections::HashMap<String, crate::numerics::Value> {
        use crate::numerics::Value;
        let x = cfg.inputs_at_quantile(self.quantile());
        let id = self.schedule().min(cfg.schedules.len() - 1);
        [
            ("h_top__0".to_string(), Value::Real(x.h_top)),
            ("h_bot__0".to_string(), Value::Real(x.h_bot)),
            ("thick__0".to_string(), Value::Real(x.thickness)),
            ("cfg__0".to_string(), Value::Index(id)),
        ]
        .into_iter()
        .collect()
    }
}

impl std::str::FromStr for Regime {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "low" | "-" => Ok(Regime::Low),
            "nominal" => Ok(Regime::Nominal),
            "high" | "+" => Ok(Regime::High),
            _ => Err(Error::Config(format!("unknown regime {s:?} (low, nominal, high)"))),
        }
    }
}
