use super::model::ProposalModel;
use crate::error::{Error, Result};
use crate::numerics::{Graph, NodeId, ParamStore};
use crate::ppl::{Program, Trace};
use crate::training::{fit, EpochRecord, TrainConfig, TrainMeta, Trainable};

struct Compiled<'a> {
    model: &'a mut ProposalModel,
    summaries: Vec<Vec<f64>>,
}

impl Trainable for Compiled<'_> {
    fn params(&self) -> &ParamStore {
        &self.model.store
    }

    fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.model.store
    }

    fn meta_mut(&mut self) -> &mut TrainMeta {
        &mut self.model.meta
    }

    fn log_lik_graph(&self, g: &mut Graph, traces: &[Trace], index: usize) -> Result<Option<NodeId>> {
        self.model.log_q_graph(g, &traces[index], &self.summaries[index])
    }

    fn log_lik(&self, traces: &[Trace], index: usize) -> Result<Option<f64>> {
        self.model.log_q(&traces[index], &self.summaries[index])
    }
}

/// Observation summaries of `traces` as the program family defines them.
pub fn summarize_traces<P: Program + ?Sized>(program: &P, traces: &[Trace]) -> Result<Vec<Vec<f64>>> {
    traces.iter().map(|t| program.summarize(&t.observations())).collect()
}

/// Fit the proposal to the latents of prior traces given their observations
/// (minimises the mean of `-log q(x_lat | x_obs)`).
///
/// Traces without latent entries carry no signal and are skipped.
pub fn ic_train<P: Program + ?Sized>(
    model: &mut ProposalModel,
    program: &P,
    traces: &[Trace],
    cfg: &TrainConfig,
    on_epoch: impl FnMut(&EpochRecord),
) -> Result<Vec<EpochRecord>> {
    if traces.is_empty() {
        return Err(Error::Config("training dataset is empty".into()));
    }
    if program.name() != model.program() {
        return Err(Error::Config(format!(
            "proposal was built for {}, dataset program is {}",
            model.program(),
            program.name()
        )));
    }
    let empty = traces.iter().filter(|t| t.latent().next().is_none()).count();
    if empty > 0 {
        log::warn!("{empty} traces have no latent entries and are skipped");
    }
    let summaries = summarize_traces(program, traces)?;
    model.set_observation_stats(&summaries)?;
    let added = model.register_traces(traces)?;
    log::info!(
        "proposal: {} latent addresses ({added} new), {} parameters",
        model.sites().len(),
        model.num_parameters()
    );
    let mut c = Compiled { model, summaries };
    fit(&mut c, traces, cfg, on_epoch)
}
