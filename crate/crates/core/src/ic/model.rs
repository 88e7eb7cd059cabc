//! Recurrent proposal network for inference compilation.
//!
//! An observation summary is embedded once per trace. The LSTM then steps
//! over the latent sites only; its input at site `a_t` is the observation
//! embedding, the embedding and family of `a_t`, and the embedded value of
//! the previous latent site. A per-address layer maps the hidden state to
//! proposal parameters, expressed relative to the site's prior spec so that
//! an untrained layer proposes close to the prior.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::dist::{log_softmax_at, logit, normal_log_density, softplus};
use crate::numerics::{DistKind, Distribution, Graph, Init, LstmParams, NodeId, ParamId, ParamStore, RecurrentState, Value, STD_FLOOR};
use crate::ppl::{Address, Trace};
use crate::surrogate::model::{unit_position, Linear};
use crate::surrogate::ValueStats;
use crate::training::TrainMeta;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IcConfig {
    pub hidden: usize,
    pub addr_emb: usize,
    pub value_emb: usize,
    pub obs_hidden: usize,
    pub obs_emb: usize,
    pub seed: u64,
}

impl Default for IcConfig {
    fn default() -> Self {
        Self {
            hidden: 128,
            addr_emb: 32,
            value_emb: 16,
            obs_hidden: 64,
            obs_emb: 64,
            seed: 0,
        }
    }
}

impl IcConfig {
    pub fn input_size(&self) -> usize {
        self.obs_emb + self.addr_emb + DistKind::COUNT + self.value_emb
    }

    fn validate(&self) -> Result<()> {
        if [self.hidden, self.addr_emb, self.value_emb, self.obs_hidden, self.obs_emb].contains(&0) {
            return Err(Error::Config(format!("proposal sizes must be positive: {self:?}")));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatentSite {
    pub address: Address,
    pub kind: DistKind,
    pub width: usize,
    pub stats: ValueStats,
}

#[derive(Clone, Copy, Debug)]
struct SiteLayers {
    emb: ParamId,
    val: Linear,
    head: Linear,
}

pub struct ProposalModel {
    pub(crate) config: IcConfig,
    pub(crate) program: String,
    pub(crate) sites: Vec<LatentSite>,
    index: HashMap<Address, usize>,
    layers: Vec<SiteLayers>,
    /// Per-dimension (mean, scale) of the observation summary.
    pub(crate) obs_norm: Vec<(f64, f64)>,
    pub(crate) store: ParamStore,
    lstm: LstmParams,
    obs1: Option<Linear>,
    obs2: Option<Linear>,
    pub meta: TrainMeta,
}

fn head_width(kind: DistKind, width: usize) -> usize {
    if kind == DistKind::Categorical {
        width
    } else {
        2
    }
}

fn prefix(a: &Address) -> String {
    format!("site.{a}")
}

fn kind_of(dist: &Distribution) -> DistKind {
    dist.kind()
}

/// Prior-relative proposal built from raw layer outputs.
fn proposal_from(prior: &Distribution, raw: &[f64]) -> Distribution {
    match *prior {
        Distribution::Normal { mean, std } => Distribution::Normal {
            mean: mean + std * raw[0],
            std: std * (softplus(raw[1]) + STD_FLOOR),
        },
        Distribution::Uniform { low, high } | Distribution::SquashedNormal { low, high, .. } => Distribution::SquashedNormal {
            loc: raw[0],
            scale: softplus(raw[1]) + STD_FLOOR,
            low,
            high,
        },
        Distribution::Categorical { ref probs } => {
            let mut l: Vec<f64> = probs.iter().zip(raw).map(|(p, r)| p.max(1e-300).ln() + r).collect();
            crate::numerics::dist::softmax_in_place(&mut l);
            Distribution::Categorical { probs: l }
        }
    }
}

impl ProposalModel {
    pub fn new(program: &str, config: IcConfig) -> Result<Self> {
        config.validate()?;
        let mut store = ParamStore::new(config.seed);
        let lstm = LstmParams::create(&mut store, "core", config.input_size(), config.hidden)?;
        Ok(Self {
            config,
            program: program.to_string(),
            sites: Vec::new(),
            index: HashMap::new(),
            layers: Vec::new(),
            obs_norm: Vec::new(),
            store,
            lstm,
            obs1: None,
            obs2: None,
            meta: TrainMeta::default(),
        })
    }

    pub fn config(&self) -> &IcConfig {
        &self.config
    }

    pub fn program(&self) -> &str {
        &self.program
    }

    pub fn sites(&self) -> &[LatentSite] {
        &self.sites
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

    pub fn summary_len(&self) -> Option<usize> {
        self.obs1.map(|_| self.obs_norm.len())
    }

    pub fn lookup(&self, address: &Address) -> Option<usize> {
        self.index.get(address).copied()
    }

    /// Fix the observation-summary normalization from training summaries and
    /// create the embedder. A no-op once set, apart from a length check.
    pub fn set_observation_stats(&mut self, summaries: &[Vec<f64>]) -> Result<()> {
        let d = summaries
            .first()
            .map(Vec::len)
            .ok_or_else(|| Error::Config("no observation summaries".into()))?;
        if summaries.iter().any(|s| s.len() != d) {
            return Err(Error::Config("observation summaries differ in length".into()));
        }
        if let Some(n) = self.summary_len() {
            if n != d {
                return Err(Error::Config(format!("observation summary length {d}, model expects {n}")));
            }
            return Ok(());
        }
        self.obs_norm = (0..d)
            .map(|j| {
                let mut s = ValueStats::default();
                summaries.iter().for_each(|v| s.push(v[j]));
                s.loc_scale()
            })
            .collect();
        let c = &self.config;
        self.obs1 = Some(Linear::create(&mut self.store, "obs.l1", c.obs_hidden, d, Init::FanIn(d))?);
        self.obs2 = Some(Linear::create(&mut self.store, "obs.l2", c.obs_emb, c.obs_hidden, Init::FanIn(c.obs_hidden))?);
        Ok(())
    }

    pub fn register_latent(&mut self, address: &Address, prior: &Distribution) -> Result<(usize, bool)> {
        let kind = kind_of(prior);
        let width = prior.num_categories().unwrap_or(1);
        if let Some(&i) = self.index.get(address) {
            let s = &self.sites[i];
            if s.kind != kind || s.width != width {
                return Err(Error::SchemaConflict {
                    address: address.to_string(),
                    registered: format!("{}({})", s.kind.name(), s.width),
                    found: format!("{}({width})", kind.name()),
                });
            }
            return Ok((i, false));
        }
        let p = prefix(address);
        let c = &self.config;
        let emb = self.store.add(&format!("{p}.emb"), &[c.addr_emb], Init::FanIn(1))?;
        let (ve, h) = (c.value_emb, c.hidden);
        let val = Linear::create(&mut self.store, &format!("{p}.val"), ve, width, Init::FanIn(width))?;
        let head = Linear::create(&mut self.store, &format!("{p}.head"), head_width(kind, width), h, Init::Zeros)?;
        let i = self.sites.len();
        self.sites.push(LatentSite {
            address: address.clone(),
            kind,
            width,
            stats: ValueStats::default(),
        });
        self.layers.push(SiteLayers { emb, val, head });
        self.index.insert(address.clone(), i);
        Ok((i, true))
    }

    /// Register all latent sites of `traces`; value statistics are gathered
    /// for sites created by this call only.
    pub fn register_traces(&mut self, traces: &[Trace]) -> Result<usize> {
        let before = self.sites.len();
        for t in traces {
            for e in t.latent() {
                let (i, _) = self.register_latent(&e.address, &e.dist)?;
                if i >= before && self.sites[i].kind != DistKind::Categorical {
                    self.sites[i].stats.push(e.value.as_f64());
                }
            }
        }
        Ok(self.sites.len() - before)
    }

    fn normalized_summary(&self, summary: &[f64]) -> Result<Vec<f64>> {
        if self.summary_len() != Some(summary.len()) {
            return Err(Error::Inference(format!(
                "observation summary has {} entries, proposal expects {:?}",
                summary.len(),
                self.summary_len()
            )));
        }
        Ok(summary
            .iter()
            .zip(&self.obs_norm)
            .map(|(x, (m, s))| (x - m) / s)
            .collect())
    }

    /// Observation embedding (no gradients).
    pub fn embed_observations(&self, summary: &[f64]) -> Result<Vec<f64>> {
        let x = self.normalized_summary(summary)?;
        let (l1, l2) = (self.obs1.unwrap(), self.obs2.unwrap());
        let mut h = Vec::new();
        l1.apply(&self.store, &x, &mut h);
        h.iter_mut().for_each(|v| *v = v.tanh());
        let mut e = Vec::new();
        l2.apply(&self.store, &h, &mut e);
        e.iter_mut().for_each(|v| *v = v.tanh());
        Ok(e)
    }

    fn encode(&self, site: usize, value: Value, out: &mut Vec<f64>) -> Result<()> {
        let s = &self.sites[site];
        out.clear();
        if s.kind == DistKind::Categorical {
            let k = value.as_index().filter(|k| *k < s.width).ok_or_else(|| Error::Support {
                value: value.to_string(),
                dist: format!("categorical({}) at {}", s.width, s.address),
            })?;
            out.resize(s.width, 0.0);
            out[k] = 1.0;
        } else {
            let (m, sd) = s.stats.loc_scale();
            out.push((value.as_f64() - m) / sd);
        }
        Ok(())
    }

    /// Proposal log-density of the latent entries of `trace` on `g`.
    /// `None` if the trace has no latent entries.
    pub fn log_q_graph(&self, g: &mut Graph, trace: &Trace, summary: &[f64]) -> Result<Option<NodeId>> {
        if trace.latent().next().is_none() {
            return Ok(None);
        }
        let st = &self.store;
        let (l1, l2) = (
            self.obs1.ok_or_else(|| Error::Config("observation embedder not initialised".into()))?,
            self.obs2.unwrap(),
        );
        let x = g.input(&self.normalized_summary(summary)?);
        let a = g.affine(st, l1.w, l1.b, x);
        let a = g.tanh(a);
        let b = g.affine(st, l2.w, l2.b, a);
        let obs = g.tanh(b);
        let h = self.config.hidden;
        let mut state = g.input(&vec![0.0; 2 * h]);
        let mut prev_val = g.input(&vec![0.0; self.config.value_emb]);
        let mut parts = Vec::new();
        let mut enc = Vec::new();
        for e in trace.latent() {
            let i = self
                .lookup(&e.address)
                .ok_or_else(|| Error::Coverage(format!("latent address {} has no proposal layer", e.address)))?;
            let ly = self.layers[i];
            let emb = g.param(st, ly.emb);
            let mut kind = [0.0; DistKind::COUNT];
            kind[self.sites[i].kind.one_hot_index()] = 1.0;
            let kind = g.input(&kind);
            let inp = g.concat(&[obs, emb, kind, prev_val]);
            state = g.lstm(st, &self.lstm, inp, state);
            let raw = g.affine_view(st, ly.head.w, ly.head.b, state, 0, h);
            let lp = match e.dist {
                Distribution::Normal { mean, std } => {
                    let z = (e.value.as_f64() - mean) / std;
                    let n = g.normal_head_lp(raw, z, STD_FLOOR);
                    g.add_const(n, -std.ln())
                }
                Distribution::Uniform { low, high } | Distribution::SquashedNormal { low, high, .. } => {
                    let u = unit_position(e.value.as_f64(), low, high);
                    let jac = -(high - low).ln() - u.ln() - (1.0 - u).ln();
                    let n = g.normal_head_lp(raw, logit(u), STD_FLOOR);
                    g.add_const(n, jac)
                }
                Distribution::Categorical { ref probs } => {
                    let lp: Vec<f64> = probs.iter().map(|p| p.max(1e-300).ln()).collect();
                    let prior = g.input(&lp);
                    let logits = g.add(raw, prior);
                    let k = e.value.as_index().ok_or_else(|| Error::Support {
                        value: e.value.to_string(),
                        dist: e.dist.to_string(),
                    })?;
                    g.categorical_lp(logits, k)
                }
            };
            parts.push(lp);
            self.encode(i, e.value, &mut enc)?;
            let v = g.input(&enc);
            let v = g.affine(st, ly.val.w, ly.val.b, v);
            prev_val = g.tanh(v);
        }
        Ok(Some(g.sum_list(&parts)))
    }

    /// Proposal log-density of the latent entries (fast path).
    pub fn log_q(&self, trace: &Trace, summary: &[f64]) -> Result<Option<f64>> {
        if trace.latent().next().is_none() {
            return Ok(None);
        }
        let mut s = IcSession::new(self, summary)?;
        let mut acc = 0.0;
        for e in trace.latent() {
            let i = self
                .lookup(&e.address)
                .ok_or_else(|| Error::Coverage(format!("latent address {} has no proposal layer", e.address)))?;
            let raw = s.step(i);
            acc += head_log_prob(&e.dist, &raw, e.value)?;
            s.commit(i, e.value)?;
        }
        Ok(Some(acc))
    }

    pub(crate) fn from_parts(
        program: String,
        config: IcConfig,
        sites: Vec<LatentSite>,
        obs_norm: Vec<(f64, f64)>,
        store: ParamStore,
        meta: TrainMeta,
    ) -> Result<Self> {
        let lstm = LstmParams::bind(&store, "core")?;
        if lstm.input != config.input_size() || lstm.hidden != config.hidden {
            return Err(Error::Malformed("proposal LSTM shape disagrees with config".into()));
        }
        let (obs1, obs2) = if obs_norm.is_empty() {
            (None, None)
        } else {
            (Some(Linear::bind(&store, "obs.l1")?), Some(Linear::bind(&store, "obs.l2")?))
        };
        let mut index = HashMap::new();
        let mut layers = Vec::new();
        for (i, s) in sites.iter().enumerate() {
            let p = prefix(&s.address);
            layers.push(SiteLayers {
                emb: store
                    .id(&format!("{p}.emb"))
                    .ok_or_else(|| Error::Malformed(format!("missing embedding for {}", s.address)))?,
                val: Linear::bind(&store, &format!("{p}.val"))?,
                head: Linear::bind(&store, &format!("{p}.head"))?,
            });
            index.insert(s.address.clone(), i);
        }
        Ok(Self {
            config,
            program,
            sites,
            index,
            layers,
            obs_norm,
            store,
            lstm,
            obs1,
            obs2,
            meta,
        })
    }
}

/// Log-density of `value` under the proposal from `raw`, in the coordinates
/// of the training graph.
fn head_log_prob(prior: &Distribution, raw: &[f64], value: Value) -> Result<f64> {
    Ok(match *prior {
        Distribution::Normal { mean, std } => {
            let z = (value.as_f64() - mean) / std;
            normal_log_density(z, raw[0], softplus(raw[1]) + STD_FLOOR) + (-std.ln())
        }
        Distribution::Uniform { low, high } | Distribution::SquashedNormal { low, high, .. } => {
            let x = value.as_f64();
            if !(x >= low && x <= high) {
                return Err(Error::Support {
                    value: value.to_string(),
                    dist: prior.to_string(),
                });
            }
            let u = unit_position(x, low, high);
            let jac = -(high - low).ln() - u.ln() - (1.0 - u).ln();
            normal_log_density(logit(u), raw[0], softplus(raw[1]) + STD_FLOOR) + jac
        }
        Distribution::Categorical { ref probs } => {
            let l: Vec<f64> = probs.iter().zip(raw).map(|(p, r)| p.max(1e-300).ln() + r).collect();
            match value.as_index() {
                Some(k) if k < l.len() => log_softmax_at(&l, k),
                _ => {
                    return Err(Error::Support {
                        value: value.to_string(),
                        dist: prior.to_string(),
                    })
                }
            }
        }
    })
}

/// Per-trace proposal state: observation embedding, LSTM state and the
/// embedded previous latent value.
pub struct IcSession<'m> {
    model: &'m ProposalModel,
    obs: Vec<f64>,
    state: RecurrentState,
    next: RecurrentState,
    gates: Vec<f64>,
    input: Vec<f64>,
    prev_val: Vec<f64>,
    enc: Vec<f64>,
    vbuf: Vec<f64>,
}

impl<'m> IcSession<'m> {
    pub fn new(model: &'m ProposalModel, summary: &[f64]) -> Result<Self> {
        let obs = model.embed_observations(summary)?;
        let h = model.config.hidden;
        Ok(Self {
            model,
            obs,
            state: RecurrentState::zeros(h),
            next: RecurrentState::zeros(h),
            gates: vec![0.0; 4 * h],
            input: vec![0.0; model.config.input_size()],
            prev_val: vec![0.0; model.config.value_emb],
            enc: Vec::new(),
            vbuf: Vec::new(),
        })
    }

    pub fn reset(&mut self) {
        let h = self.model.config.hidden;
        self.state = RecurrentState::zeros(h);
        self.prev_val.iter_mut().for_each(|v| *v = 0.0);
    }

    /// Advance the LSTM onto site `i`; returns the raw proposal outputs.
    fn step(&mut self, i: usize) -> Vec<f64> {
        let m = self.model;
        let c = &m.config;
        let ly = m.layers[i];
        let mut o = 0;
        self.input[..c.obs_emb].copy_from_slice(&self.obs);
        o += c.obs_emb;
        self.input[o..o + c.addr_emb].copy_from_slice(m.store.value(ly.emb));
        o += c.addr_emb;
        for k in 0..DistKind::COUNT {
            self.input[o + k] = 0.0;
        }
        self.input[o + m.sites[i].kind.one_hot_index()] = 1.0;
        o += DistKind::COUNT;
        self.input[o..].copy_from_slice(&self.prev_val);
        m.lstm
            .step_into(&m.store, &self.input, &self.state, &mut self.gates, &mut self.next);
        std::mem::swap(&mut self.state, &mut self.next);
        let mut raw = Vec::new();
        ly.head.apply(&m.store, &self.state.h, &mut raw);
        raw
    }

    fn commit(&mut self, i: usize, value: Value) -> Result<()> {
        self.model.encode(i, value, &mut self.enc)?;
        self.model.layers[i]
            .val
            .apply(&self.model.store, &self.enc, &mut self.vbuf);
        for (d, v) in self.prev_val.iter_mut().zip(&self.vbuf) {
            *d = v.tanh();
        }
        Ok(())
    }

    /// Proposal for the next latent site. Unknown addresses get the prior
    /// spec back unchanged and leave the state untouched.
    pub fn propose(&mut self, address: &Address, prior: &Distribution) -> Result<(Distribution, Option<usize>)> {
        match self.model.lookup(address) {
            None => Ok((prior.clone(), None)),
            Some(i) => {
                let s = &self.model.sites[i];
                if s.kind != prior.kind() || s.width != prior.num_categories().unwrap_or(1) {
                    return Err(Error::SchemaConflict {
                        address: address.to_string(),
                        registered: format!("{}({})", s.kind.name(), s.width),
                        found: prior.to_string(),
                    });
                }
                let raw = self.step(i);
                Ok((proposal_from(prior, &raw), Some(i)))
            }
        }
    }

    /// Record the value chosen at site `site` (as returned by `propose`).
    pub fn record(&mut self, site: Option<usize>, value: Value) -> Result<()> {
        match site {
            Some(i) => self.commit(i, value),
            None => Ok(()),
        }
    }
}
