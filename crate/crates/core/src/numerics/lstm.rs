use serde::{Deserialize, Serialize};

use super::kernels::lstm_cell;
use super::params::{Init, ParamId, ParamStore};
use crate::error::{Error, Result};

/// Hidden and cell vectors of an LSTM.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecurrentState {
    pub h: Vec<f64>,
    pub c: Vec<f64>,
}

impl RecurrentState {
    pub fn zeros(hidden: usize) -> Self {
        Self {
            h: vec![0.0; hidden],
            c: vec![0.0; hidden],
        }
    }

    pub fn hidden(&self) -> usize {
        self.h.len()
    }
}

/// Handles to the stacked LSTM weights inside a [`ParamStore`].
///
/// `w_ih` is `[4H, I]`, `w_hh` is `[4H, H]` and `bias` is `[4H]`, with gate
/// blocks ordered input, forget, candidate, output.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LstmParams {
    pub w_ih: ParamId,
    pub w_hh: ParamId,
    pub bias: ParamId,
    pub input: usize,
    pub hidden: usize,
}

impl LstmParams {
    pub fn create(store: &mut ParamStore, prefix: &str, input: usize, hidden: usize) -> Result<Self> {
        Ok(Self {
            w_ih: store.add(&format!("{prefix}.w_ih"), &[4 * hidden, input], Init::FanIn(input))?,
            w_hh: store.add(&format!("{prefix}.w_hh"), &[4 * hidden, hidden], Init::FanIn(hidden))?,
            bias: store.add(&format!("{prefix}.bias"), &[4 * hidden], Init::Zeros)?,
            input,
            hidden,
        })
    }

    /// Re-bind to an existing store (e.g. one loaded from a checkpoint).
    pub fn bind(store: &ParamStore, prefix: &str) -> Result<Self> {
        let get = |n: &str| {
            store
                .id(&format!("{prefix}.{n}"))
                .ok_or_else(|| Error::Malformed(format!("missing parameter {prefix}.{n}")))
        };
        let w_ih = get("w_ih")?;
        let shape = store.shape(w_ih);
        let (hidden, input) = (shape[0] / 4, shape[1]);
        Ok(Self {
            w_ih,
            w_hh: get("w_hh")?,
            bias: get("bias")?,
            input,
            hidden,
        })
    }

    /// One cell update without gradient tracking.
    pub fn step(&self, store: &ParamStore, input: &[f64], state: &RecurrentState) -> Result<RecurrentState> {
        if input.len() != self.input || state.hidden() != self.hidden {
            return Err(Error::Config(format!(
                "LSTM expects input {} / hidden {}, got {} / {}",
                self.input,
                self.hidden,
                input.len(),
                state.hidden()
            )));
        }
        let mut next = RecurrentState::zeros(self.hidden);
        let mut gates = vec![0.0; 4 * self.hidden];
        self.step_into(store, input, state, &mut gates, &mut next);
        Ok(next)
    }

    /// Unchecked update into caller-provided buffers.
    pub fn step_into(
        &self,
        store: &ParamStore,
        input: &[f64],
        state: &RecurrentState,
        gates: &mut [f64],
        next: &mut RecurrentState,
    ) {
        lstm_cell(
            store.value(self.w_ih),
            store.value(self.w_hh),
            store.value(self.bias),
            input,
            &state.h,
            &state.c,
            gates,
            &mut next.h,
            &mut next.c,
        );
    }
}

/// Convenience wrapper: `(output, state')` where `output` is the new hidden vector.
pub fn lstm_step(
    store: &ParamStore,
    cell: &LstmParams,
    input: &[f64],
    state: &RecurrentState,
) -> Result<(Vec<f64>, RecurrentState)> {
    let next = cell.step(store, input, state)?;
    Ok((next.h.clone(), next))
}
