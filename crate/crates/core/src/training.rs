//! Mini-batch likelihood training shared by the surrogate and the proposal network.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::rng::stream_id;
use crate::numerics::{adam_step, AdamConfig, CounterRng, Graph, NodeId, ParamStore};
use crate::ppl::Trace;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: u32,
    pub batch_size: usize,
    #[serde(default)]
    pub adam: AdamConfig,
    /// Every `holdout_every`-th trace is held out (0 disables the split).
    pub holdout_every: usize,
    /// Seed of the per-epoch shuffles.
    pub seed: u64,
    /// Learning rate multiplier per epoch: epoch `e` uses `lr · lr_decay^(e-1)`.
    #[serde(default = "unit")]
    pub lr_decay: f64,
}

fn unit() -> f64 {
    1.0
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 10,
            batch_size: 32,
            adam: AdamConfig::default(),
            holdout_every: 10,
            seed: 0,
            lr_decay: 1.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: u32,
    pub train_nll: f64,
    pub heldout_nll: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainMeta {
    pub traces_seen: u64,
    pub epochs: u32,
    pub history: Vec<EpochRecord>,
}

pub(crate) trait Trainable: Sync {
    fn params(&self) -> &ParamStore;
    fn params_mut(&mut self) -> &mut ParamStore;
    fn meta_mut(&mut self) -> &mut TrainMeta;
    /// Log-likelihood node of trace `index`, or `None` if it carries no signal.
    fn log_lik_graph(&self, g: &mut Graph, traces: &[Trace], index: usize) -> Result<Option<NodeId>>;
    fn log_lik(&self, traces: &[Trace], index: usize) -> Result<Option<f64>>;
}

/// Indices of (training, held-out) traces.
pub fn split(n: usize, holdout_every: usize) -> (Vec<usize>, Vec<usize>) {
    if holdout_every < 2 || n < holdout_every {
        return ((0..n).collect(), Vec::new());
    }
    (0..n).partition(|i| i % holdout_every != holdout_every - 1)
}

fn mean_nll<M: Trainable>(model: &M, traces: &[Trace], idx: &[usize]) -> Result<f64> {
    let vals: Vec<Option<f64>> = idx
        .par_iter()
        .map(|&i| model.log_lik(traces, i))
        .collect::<Result<_>>()?;
    let (mut s, mut n) = (0.0, 0usize);
    for v in vals.into_iter().flatten() {
        s -= v;
        n += 1;
    }
    Ok(if n == 0 { f64::NAN } else { s / n as f64 })
}

pub(crate) fn fit<M: Trainable>(
    model: &mut M,
    traces: &[Trace],
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<Vec<EpochRecord>> {
    if traces.is_empty() {
        return Err(Error::Config("training dataset is empty".into()));
    }
    if cfg.batch_size == 0 {
        return Err(Error::Config("batch size must be positive".into()));
    }
    if !(cfg.lr_decay > 0.0 && cfg.lr_decay <= 1.0) {
        return Err(Error::Config(format!("lr_decay must be in (0, 1], got {}", cfg.lr_decay)));
    }
    let (train, held) = split(traces.len(), cfg.holdout_every);
    let held_eval = if held.is_empty() { &train } else { &held };
    let mut out = Vec::new();
    if model.meta_mut().epochs == 0 && model.meta_mut().history.is_empty() {
        let rec = EpochRecord {
            epoch: 0,
            train_nll: mean_nll(model, traces, &train)?,
            heldout_nll: mean_nll(model, traces, held_eval)?,
        };
        on_epoch(&rec);
        model.meta_mut().history.push(rec);
        out.push(rec);
    }
    let shuffle = CounterRng::new(cfg.seed, stream_id("epoch-shuffle"));
    let first = model.meta_mut().epochs + 1;
    for epoch in first..first + cfg.epochs {
        let mut order = train.clone();
        order.shuffle(&mut shuffle.split(u64::from(epoch)));
        let adam = AdamConfig {
            lr: cfg.adam.lr * cfg.lr_decay.powi(epoch as i32 - 1),
            ..cfg.adam
        };
        let (mut total, mut count) = (0.0, 0usize);
        for batch in order.chunks(cfg.batch_size) {
            let mut grads = std::mem::take(model.params_mut().grads_mut());
            let mut used = 0usize;
            for &i in batch {
                let mut g = Graph::new();
                let Some(node) = model.log_lik_graph(&mut g, traces, i)? else {
                    continue;
                };
                let nll = -g.scalar(node);
                if !nll.is_finite() {
                    let ids: Vec<u64> = batch.iter().map(|&j| traces[j].id).collect();
                    *model.params_mut().grads_mut() = grads;
                    model.params_mut().zero_grads();
                    return Err(Error::NonFinite {
                        what: "loss".into(),
                        location: format!("batch of trace ids {ids:?}"),
                    });
                }
                total += nll;
                count += 1;
                used += 1;
                g.backward(node, -1.0, model.params(), &mut grads);
            }
            if used > 0 {
                grads.scale(1.0 / used as f64);
            }
            *model.params_mut().grads_mut() = grads;
            if used > 0 {
                adam_step(model.params_mut(), &adam)?;
            }
        }
        let rec = EpochRecord {
            epoch,
            train_nll: if count == 0 { f64::NAN } else { total / count as f64 },
            heldout_nll: mean_nll(model, traces, held_eval)?,
        };
        on_epoch(&rec);
        let meta = model.meta_mut();
        meta.epochs = epoch;
        meta.traces_seen += train.len() as u64;
        meta.history.push(rec);
        out.push(rec);
    }
    Ok(out)
}
