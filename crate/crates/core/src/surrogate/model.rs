//! The surrogate network: an LSTM over (address, kind, value) tokens with
//! per-address value heads and truncated transition heads.
//!
//! Factor order for a trace `a_1..a_T`: with state `h` after consuming the
//! first `t-1` entries, score the transition `a_{t-1} -> a_t` (the start
//! head for `t = 1`), then the value at `a_t`, then feed the entry to the
//! LSTM. A final transition to END closes the trace.

use serde::{Deserialize, Serialize};

use super::registry::{Next, Registry, SiteRecord, SiteSchema};
use crate::error::{Error, Result};
use crate::numerics::dist::{log_softmax_at, logit, normal_log_density, softmax, softplus};
use crate::numerics::kernels::affine;
use crate::numerics::{DistKind, Distribution, Graph, Init, LstmParams, NodeId, ParamId, ParamStore, RecurrentState, Value, STD_FLOOR};
use crate::ppl::{Address, Trace};
use crate::training::TrainMeta;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PsnConfig {
    pub hidden: usize,
    pub addr_emb: usize,
    pub value_emb: usize,
    pub t_max: usize,
    /// Initialization seed.
    pub seed: u64,
}

impl Default for PsnConfig {
    fn default() -> Self {
        Self {
            hidden: 128,
            addr_emb: 64,
            value_emb: 16,
            t_max: crate::ppl::DEFAULT_T_MAX,
            seed: 0,
        }
    }
}

impl PsnConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 || self.addr_emb == 0 || self.value_emb == 0 || self.t_max == 0 {
            return Err(Error::Config(format!("surrogate sizes must be positive: {self:?}")));
        }
        Ok(())
    }

    pub fn input_size(&self) -> usize {
        self.addr_emb + DistKind::COUNT + self.value_emb
    }
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct Linear {
    pub w: ParamId,
    pub b: ParamId,
}

impl Linear {
    pub(crate) fn create(store: &mut ParamStore, name: &str, rows: usize, cols: usize, init: Init) -> Result<Self> {
        Ok(Self {
            w: store.add(&format!("{name}.w"), &[rows, cols], init)?,
            b: store.add(&format!("{name}.b"), &[rows], Init::Zeros)?,
        })
    }

    pub(crate) fn bind(store: &ParamStore, name: &str) -> Result<Self> {
        let get = |s: &str| {
            store
                .id(&format!("{name}.{s}"))
                .ok_or_else(|| Error::Malformed(format!("missing parameter {name}.{s}")))
        };
        Ok(Self { w: get("w")?, b: get("b")? })
    }

    pub fn apply(&self, store: &ParamStore, x: &[f64], out: &mut Vec<f64>) {
        let rows = store.value(self.b).len();
        out.resize(rows, 0.0);
        affine(store.value(self.w), store.value(self.b), x, out);
    }
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct SiteParams {
    pub emb: ParamId,
    pub val: Linear,
    pub head: Linear,
    pub trans: Linear,
}

pub struct SurrogateModel {
    pub(crate) config: PsnConfig,
    pub(crate) program: String,
    pub(crate) registry: Registry,
    pub(crate) store: ParamStore,
    pub(crate) lstm: LstmParams,
    pub(crate) start_trans: Linear,
    pub(crate) site_params: Vec<SiteParams>,
    pub meta: TrainMeta,
}

fn head_width(schema: &SiteSchema) -> usize {
    match schema.kind {
        DistKind::Categorical => schema.width,
        _ => 2,
    }
}

fn site_prefix(a: &Address) -> String {
    format!("site.{a}")
}

/// Unit-interval position of a bounded value, kept strictly inside (0, 1).
pub(crate) fn unit_position(x: f64, low: f64, high: f64) -> f64 {
    ((x - low) / (high - low)).clamp(f64::EPSILON, 1.0 - f64::EPSILON)
}

impl SurrogateModel {
    pub fn new(program: &str, config: PsnConfig) -> Result<Self> {
        config.validate()?;
        let mut store = ParamStore::new(config.seed);
        let lstm = LstmParams::create(&mut store, "core", config.input_size(), config.hidden)?;
        let start_trans = Linear::create(&mut store, "start.trans", 0, config.hidden, Init::Zeros)?;
        Ok(Self {
            config,
            program: program.to_string(),
            registry: Registry::default(),
            store,
            lstm,
            start_trans,
            site_params: Vec::new(),
            meta: TrainMeta::default(),
        })
    }

    pub(crate) fn from_parts(
        program: String,
        config: PsnConfig,
        registry: Registry,
        store: ParamStore,
        meta: TrainMeta,
    ) -> Result<Self> {
        let lstm = LstmParams::bind(&store, "core")?;
        if lstm.input != config.input_size() || lstm.hidden != config.hidden {
            return Err(Error::Malformed("core LSTM shape disagrees with config".into()));
        }
        let start_trans = Linear::bind(&store, "start.trans")?;
        let mut site_params = Vec::with_capacity(registry.len());
        for s in registry.sites() {
            let p = site_prefix(&s.address);
            site_params.push(SiteParams {
                emb: store
                    .id(&format!("{p}.emb"))
                    .ok_or_else(|| Error::Malformed(format!("missing embedding for {}", s.address)))?,
                val: Linear::bind(&store, &format!("{p}.val"))?,
                head: Linear::bind(&store, &format!("{p}.head"))?,
                trans: Linear::bind(&store, &format!("{p}.trans"))?,
            });
        }
        let m = Self {
            config,
            program,
            registry,
            store,
            lstm,
            start_trans,
            site_params,
            meta,
        };
        for from in std::iter::once(None).chain((0..m.registry.len()).map(Some)) {
            let rows = m.store.value(m.trans_params(from).b).len();
            if rows != m.registry.successors(from).len() {
                return Err(Error::Malformed("transition head size disagrees with successor set".into()));
            }
        }
        Ok(m)
    }

    pub fn config(&self) -> &PsnConfig {
        &self.config
    }

    pub fn program(&self) -> &str {
        &self.program
    }

    pub fn registry(&self) -> &Registry {
        &self.registry
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    pub fn num_parameters(&self) -> usize {
        self.store.num_scalars()
    }

    /// Register an address with a fresh embedding and zero-initialised heads.
    /// Registering again with the same schema is a no-op.
    pub fn register_address(&mut self, address: &Address, schema: SiteSchema) -> Result<usize> {
        let out = head_width(&schema);
        let width = schema.width;
        let (i, fresh) = self.registry.register(address, schema)?;
        if fresh {
            let p = site_prefix(address);
            let h = self.config.hidden;
            let emb = self.store.add(&format!("{p}.emb"), &[self.config.addr_emb], Init::FanIn(1))?;
            let val = Linear::create(&mut self.store, &format!("{p}.val"), self.config.value_emb, width, Init::FanIn(width))?;
            let head = Linear::create(&mut self.store, &format!("{p}.head"), out, h, Init::Zeros)?;
            let trans = Linear::create(&mut self.store, &format!("{p}.trans"), 0, h, Init::Zeros)?;
            self.site_params.push(SiteParams { emb, val, head, trans });
        }
        Ok(i)
    }

    pub(crate) fn trans_params(&self, from: Option<usize>) -> Linear {
        match from {
            None => self.start_trans,
            Some(i) => self.site_params[i].trans,
        }
    }

    /// Add a transition; new successors get a zero-initialised logit row.
    pub fn add_transition(&mut self, from: Option<usize>, to: Next) {
        if self.registry.add_successor(from, to).is_some() {
            let t = self.trans_params(from);
            self.store.grow_rows(t.w, 1);
            self.store.grow_rows(t.b, 1);
        }
    }

    /// Register every address, transition and (for new addresses) value
    /// statistics found in `traces`.
    pub fn register_traces(&mut self, traces: &[Trace]) -> Result<usize> {
        let mut fresh = vec![false; self.registry.len()];
        let before = self.registry.len();
        for tr in traces {
            let mut prev = None;
            for e in &tr.entries {
                let i = self.register_address(&e.address, SiteSchema::of(&e.dist, e.observed))?;
                if i >= fresh.len() {
                    fresh.resize(i + 1, true);
                }
                if fresh[i] && self.registry.site(i).schema.kind != DistKind::Categorical {
                    self.registry.site_mut(i).stats.push(e.value.as_f64());
                }
                self.add_transition(prev, Next::Site(i));
                prev = Some(i);
            }
            self.add_transition(prev, Next::End);
        }
        Ok(self.registry.len() - before)
    }

    fn site_index(&self, address: &Address) -> Result<usize> {
        self.registry
            .lookup(address)
            .ok_or_else(|| Error::Coverage(format!("address {address} is not registered")))
    }

    fn transition_position(&self, from: Option<usize>, to: Next) -> Result<usize> {
        self.registry.successor_position(from, to).ok_or_else(|| {
            let f = from.map_or("START".to_string(), |i| self.registry.site(i).address.to_string());
            Error::Coverage(format!(
                "transition {f} -> {} is not in the successor set",
                self.registry.name_of(to)
            ))
        })
    }

    /// Network input encoding of a value at a site.
    pub(crate) fn encode_value(&self, site: &SiteRecord, value: Value, out: &mut Vec<f64>) -> Result<()> {
        out.clear();
        match site.schema.kind {
            DistKind::Categorical => {
                let k = value
                    .as_index()
                    .filter(|k| *k < site.schema.width)
                    .ok_or_else(|| Error::Support {
                        value: value.to_string(),
                        dist: format!("categorical({}) at {}", site.schema.width, site.address),
                    })?;
                out.resize(site.schema.width, 0.0);
                out[k] = 1.0;
            }
            _ => {
                let (m, s) = site.stats.loc_scale();
                out.push((value.as_f64() - m) / s);
            }
        }
        Ok(())
    }

    /// Distribution emitted by a head given its raw outputs.
    pub(crate) fn head_distribution(site: &SiteRecord, raw: &[f64]) -> Distribution {
        match site.schema.kind {
            DistKind::Categorical => Distribution::Categorical { probs: softmax(raw) },
            DistKind::Normal => {
                let (m, s) = site.stats.loc_scale();
                Distribution::Normal {
                    mean: m + s * raw[0],
                    std: s * (softplus(raw[1]) + STD_FLOOR),
                }
            }
            DistKind::Uniform => {
                let (low, high) = site.schema.bounds.expect("uniform site without bounds");
                Distribution::SquashedNormal {
                    loc: raw[0],
                    scale: softplus(raw[1]) + STD_FLOOR,
                    low,
                    high,
                }
            }
        }
    }

    /// Log-density of a value under a head, written in the normalized
    /// coordinates used by the training graph.
    pub(crate) fn head_log_prob(site: &SiteRecord, raw: &[f64], value: Value) -> Result<f64> {
        match site.schema.kind {
            DistKind::Categorical => match value.as_index() {
                Some(k) if k < raw.len() => Ok(log_softmax_at(raw, k)),
                _ => Err(Error::Support {
                    value: value.to_string(),
                    dist: format!("categorical({}) at {}", raw.len(), site.address),
                }),
            },
            DistKind::Normal => {
                let (m, s) = site.stats.loc_scale();
                let z = (value.as_f64() - m) / s;
                Ok(normal_log_density(z, raw[0], softplus(raw[1]) + STD_FLOOR) + (-s.ln()))
            }
            DistKind::Uniform => {
                let (low, high) = site.schema.bounds.expect("uniform site without bounds");
                let x = value.as_f64();
                if !(x >= low && x <= high) {
                    return Err(Error::Support {
                        value: value.to_string(),
                        dist: format!("uniform({low}, {high}) at {}", site.address),
                    });
                }
                let u = unit_position(x, low, high);
                let jac = -(high - low).ln() - u.ln() - (1.0 - u).ln();
                Ok(normal_log_density(logit(u), raw[0], softplus(raw[1]) + STD_FLOOR) + jac)
            }
        }
    }

    /// Surrogate log-density of a trace (fast path, no gradients).
    pub fn log_prob(&self, trace: &Trace) -> Result<f64> {
        let mut cur = Cursor::new(self);
        let mut parts = Vec::with_capacity(2 * trace.len());
        for e in &trace.entries {
            let i = self.site_index(&e.address)?;
            let pos = self.transition_position(cur.prev, Next::Site(i))?;
            let logits = cur.transition_logits();
            parts.push(log_softmax_at(&logits, pos));
            let raw = cur.head_raw(i);
            parts.push(Self::head_log_prob(self.registry.site(i), &raw, e.value)?);
            cur.consume(i, e.value)?;
        }
        let pos = self.transition_position(cur.prev, Next::End)?;
        let end = log_softmax_at(&cur.transition_logits(), pos);
        let mut acc = 0.0;
        for p in parts {
            acc += p;
        }
        Ok(acc + end)
    }

    /// Record the surrogate log-density of `trace` on `g`; returns the scalar node.
    pub fn log_prob_graph(&self, g: &mut Graph, trace: &Trace) -> Result<NodeId> {
        let st = &self.store;
        let h = self.config.hidden;
        let zero_in = g.input(&vec![0.0; self.config.input_size()]);
        let zero_state = g.input(&vec![0.0; 2 * h]);
        let mut state = g.lstm(st, &self.lstm, zero_in, zero_state);
        let mut parts = Vec::with_capacity(2 * trace.len() + 1);
        let mut prev = None;
        let mut enc = Vec::new();
        for e in &trace.entries {
            let i = self.site_index(&e.address)?;
            let site = self.registry.site(i);
            let sp = self.site_params[i];

            let pos = self.transition_position(prev, Next::Site(i))?;
            let t = self.trans_params(prev);
            let logits = g.affine_view(st, t.w, t.b, state, 0, h);
            parts.push(g.categorical_lp(logits, pos));

            let raw = g.affine_view(st, sp.head.w, sp.head.b, state, 0, h);
            let lp = match site.schema.kind {
                DistKind::Categorical => {
                    let k = e.value.as_index().filter(|k| *k < site.schema.width).ok_or_else(|| Error::Support {
                        value: e.value.to_string(),
                        dist: format!("categorical({}) at {}", site.schema.width, site.address),
                    })?;
                    g.categorical_lp(raw, k)
                }
                DistKind::Normal => {
                    let (m, s) = site.stats.loc_scale();
                    let z = (e.value.as_f64() - m) / s;
                    let n = g.normal_head_lp(raw, z, STD_FLOOR);
                    g.add_const(n, -s.ln())
                }
                DistKind::Uniform => {
                    let (low, high) = site.schema.bounds.expect("uniform site without bounds");
                    let x = e.value.as_f64();
                    if !(x >= low && x <= high) {
                        return Err(Error::Support {
                            value: e.value.to_string(),
                            dist: format!("uniform({low}, {high}) at {}", site.address),
                        });
                    }
                    let u = unit_position(x, low, high);
                    let jac = -(high - low).ln() - u.ln() - (1.0 - u).ln();
                    let n = g.normal_head_lp(raw, logit(u), STD_FLOOR);
                    g.add_const(n, jac)
                }
            };
            parts.push(lp);

            self.encode_value(site, e.value, &mut enc)?;
            let emb = g.param(st, sp.emb);
            let mut kind = [0.0; DistKind::COUNT];
            kind[site.schema.kind.one_hot_index()] = 1.0;
            let kind = g.input(&kind);
            let v_in = g.input(&enc);
            let v_lin = g.affine(st, sp.val.w, sp.val.b, v_in);
            let v_emb = g.tanh(v_lin);
            let x = g.concat(&[emb, kind, v_emb]);
            state = g.lstm(st, &self.lstm, x, state);
            prev = Some(i);
        }
        let pos = self.transition_position(prev, Next::End)?;
        let t = self.trans_params(prev);
        let logits = g.affine_view(st, t.w, t.b, state, 0, h);
        parts.push(g.categorical_lp(logits, pos));
        Ok(g.sum_list(&parts))
    }
}

/// Incremental no-gradient evaluation of the network along one trace.
pub struct Cursor<'m> {
    model: &'m SurrogateModel,
    state: RecurrentState,
    next: RecurrentState,
    gates: Vec<f64>,
    input: Vec<f64>,
    enc: Vec<f64>,
    vbuf: Vec<f64>,
    /// Last consumed site; `None` before the first entry.
    pub prev: Option<usize>,
}

impl<'m> Cursor<'m> {
    pub fn new(model: &'m SurrogateModel) -> Self {
        let h = model.config.hidden;
        let mut c = Self {
            model,
            state: RecurrentState::zeros(h),
            next: RecurrentState::zeros(h),
            gates: vec![0.0; 4 * h],
            input: vec![0.0; model.config.input_size()],
            enc: Vec::new(),
            vbuf: Vec::new(),
            prev: None,
        };
        c.step();
        c
    }

    fn step(&mut self) {
        self.model
            .lstm
            .step_into(&self.model.store, &self.input, &self.state, &mut self.gates, &mut self.next);
        std::mem::swap(&mut self.state, &mut self.next);
    }

    pub fn transition_logits(&self) -> Vec<f64> {
        let mut out = Vec::new();
        self.model
            .trans_params(self.prev)
            .apply(&self.model.store, &self.state.h, &mut out);
        out
    }

    pub fn head_raw(&self, site: usize) -> Vec<f64> {
        let mut out = Vec::new();
        self.model.site_params[site]
            .head
            .apply(&self.model.store, &self.state.h, &mut out);
        out
    }

    pub fn site_distribution(&self, site: usize) -> Distribution {
        SurrogateModel::head_distribution(self.model.registry.site(site), &self.head_raw(site))
    }

    pub fn consume(&mut self, site: usize, value: Value) -> Result<()> {
        let m = self.model;
        let rec = m.registry.site(site);
        let sp = m.site_params[site];
        m.encode_value(rec, value, &mut self.enc)?;
        sp.val.apply(&m.store, &self.enc, &mut self.vbuf);
        let e = m.config.addr_emb;
        self.input[..e].copy_from_slice(m.store.value(sp.emb));
        for k in 0..DistKind::COUNT {
            self.input[e + k] = 0.0;
        }
        self.input[e + rec.schema.kind.one_hot_index()] = 1.0;
        for (dst, v) in self.input[e + DistKind::COUNT..].iter_mut().zip(&self.vbuf) {
            *dst = v.tanh();
        }
        self.step();
        self.prev = Some(site);
        Ok(())
    }
}
