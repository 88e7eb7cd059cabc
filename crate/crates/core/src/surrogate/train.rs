use super::model::SurrogateModel;
use crate::error::{Error, Result};
use crate::numerics::{Graph, NodeId, ParamStore};
use crate::ppl::Trace;
use crate::training::{fit, EpochRecord, TrainConfig, TrainMeta, Trainable};

impl Trainable for SurrogateModel {
    fn params(&self) -> &ParamStore {
        &self.store
    }

    fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    fn meta_mut(&mut self) -> &mut TrainMeta {
        &mut self.meta
    }

    fn log_lik_graph(&self, g: &mut Graph, traces: &[Trace], index: usize) -> Result<Option<NodeId>> {
        self.log_prob_graph(g, &traces[index]).map(Some)
    }

    fn log_lik(&self, traces: &[Trace], index: usize) -> Result<Option<f64>> {
        self.log_prob(&traces[index]).map(Some)
    }
}

/// Register every address and transition in `traces`, then minimise the
/// mean negative surrogate log-density by mini-batch Adam.
///
/// Epoch 0 in the returned history is the evaluation before any update.
/// Calling again on a model loaded from a checkpoint continues the epoch
/// count, and therefore the shuffle sequence, where it stopped.
pub fn psn_train(
    model: &mut SurrogateModel,
    traces: &[Trace],
    cfg: &TrainConfig,
    on_epoch: impl FnMut(&EpochRecord),
) -> Result<Vec<EpochRecord>> {
    if traces.is_empty() {
        return Err(Error::Config("training dataset is empty".into()));
    }
    let added = model.register_traces(traces)?;
    log::info!(
        "surrogate registry: {} addresses ({added} new), {} parameters",
        model.registry().len(),
        model.num_parameters()
    );
    fit(model, traces, cfg, on_epoch)
}
