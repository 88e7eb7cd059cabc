//! Named parameter arrays with gradient buffers and optimizer moments.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::rng::{stream_id, CounterRng};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub usize);

#[derive(Clone, Copy, Debug)]
pub enum Init {
    Zeros,
    /// Uniform on `±1/sqrt(fan_in)`.
    FanIn(usize),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Param {
    pub name: String,
    pub shape: Vec<usize>,
    pub value: Vec<f64>,
    /// Adam first and second moments.
    pub adam_m: Vec<f64>,
    pub adam_v: Vec<f64>,
}

impl Param {
    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }
}

/// Gradient buffers shaped like a [`ParamStore`].
#[derive(Clone, Debug, Default)]
pub struct Gradients {
    bufs: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn get(&self, id: ParamId) -> &[f64] {
        &self.bufs[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut [f64] {
        &mut self.bufs[id.0]
    }

    pub fn zero(&mut self) {
        for b in &mut self.bufs {
            b.iter_mut().for_each(|g| *g = 0.0);
        }
    }

    pub fn add_from(&mut self, other: &Gradients) {
        for (a, b) in self.bufs.iter_mut().zip(&other.bufs) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += *y;
            }
        }
    }

    pub fn scale(&mut self, c: f64) {
        for b in &mut self.bufs {
            b.iter_mut().for_each(|g| *g *= c);
        }
    }

    pub fn norm(&self) -> f64 {
        self.bufs
            .iter()
            .flat_map(|b| b.iter())
            .map(|g| g * g)
            .sum::<f64>()
            .sqrt()
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        self.bufs.iter().map(|b| b.as_slice())
    }
}

#[derive(Clone, Debug, Default)]
pub struct ParamStore {
    params: Vec<Param>,
    index: HashMap<String, ParamId>,
    grads: Gradients,
    step: u64,
    seed: u64,
}

impl ParamStore {
    /// `seed` drives initialization; each parameter draws from its own
    /// stream keyed by name, so init does not depend on creation order.
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            ..Default::default()
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub(crate) fn increment_step(&mut self) {
        self.step += 1;
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn num_scalars(&self) -> usize {
        self.params.iter().map(Param::len).sum()
    }

    /// Create a parameter, or return the existing one if the name and shape match.
    pub fn add(&mut self, name: &str, shape: &[usize], init: Init) -> Result<ParamId> {
        if let Some(&id) = self.index.get(name) {
            if self.params[id.0].shape != shape {
                return Err(Error::Config(format!(
                    "parameter {name} exists with shape {:?}, requested {:?}",
                    self.params[id.0].shape, shape
                )));
            }
            return Ok(id);
        }
        let n: usize = shape.iter().product();
        let value = match init {
            Init::Zeros => vec![0.0; n],
            Init::FanIn(fan_in) => {
                let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
                let mut rng = CounterRng::new(self.seed, stream_id(name));
                (0..n).map(|_| bound * (2.0 * rng.next_f64() - 1.0)).collect()
            }
        };
        let id = ParamId(self.params.len());
        self.params.push(Param {
            name: name.to_string(),
            shape: shape.to_vec(),
            adam_m: vec![0.0; n],
            adam_v: vec![0.0; n],
            value,
        });
        self.grads.bufs.push(vec![0.0; n]);
        self.index.insert(name.to_string(), id);
        Ok(id)
    }

    /// Append zero-initialised rows to a row-major matrix (or entries to a vector).
    pub fn grow_rows(&mut self, id: ParamId, extra_rows: usize) {
        let p = &mut self.params[id.0];
        let row_len: usize = p.shape[1..].iter().product();
        let extra = extra_rows * row_len;
        p.shape[0] += extra_rows;
        p.value.extend(std::iter::repeat_n(0.0, extra));
        p.adam_m.extend(std::iter::repeat_n(0.0, extra));
        p.adam_v.extend(std::iter::repeat_n(0.0, extra));
        self.grads.bufs[id.0].extend(std::iter::repeat_n(0.0, extra));
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).copied()
    }

    pub fn param(&self, id: ParamId) -> &Param {
        &self.params[id.0]
    }

    pub fn params(&self) -> &[Param] {
        &self.params
    }

    pub fn value(&self, id: ParamId) -> &[f64] {
        &self.params[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut [f64] {
        &mut self.params[id.0].value
    }

    pub fn shape(&self, id: ParamId) -> &[usize] {
        &self.params[id.0].shape
    }

    pub fn grads(&self) -> &Gradients {
        &self.grads
    }

    pub fn grads_mut(&mut self) -> &mut Gradients {
        &mut self.grads
    }

    pub fn zero_grads(&mut self) {
        self.grads.zero();
    }

    /// A zeroed gradient buffer with this store's shapes.
    pub fn new_gradients(&self) -> Gradients {
        Gradients {
            bufs: self.params.iter().map(|p| vec![0.0; p.len()]).collect(),
        }
    }

    pub(crate) fn params_and_grads_mut(&mut self) -> (&mut [Param], &mut Gradients) {
        (&mut self.params, &mut self.grads)
    }

    /// Flattened copy of all parameter values, in creation order.
    pub fn flat_values(&self) -> Vec<f64> {
        self.params.iter().flat_map(|p| p.value.iter().copied()).collect()
    }

    pub fn all_finite(&self) -> bool {
        self.params.iter().all(|p| p.value.iter().all(|v| v.is_finite()))
    }

    pub fn snapshot(&self) -> StoreSnapshot {
        StoreSnapshot {
            seed: self.seed,
            step: self.step,
            params: self.params.clone(),
        }
    }

    pub fn from_snapshot(s: StoreSnapshot) -> Result<Self> {
        let mut index = HashMap::new();
        for (i, p) in s.params.iter().enumerate() {
            let n: usize = p.shape.iter().product();
            if p.value.len() != n || p.adam_m.len() != n || p.adam_v.len() != n {
                return Err(Error::Malformed(format!(
                    "parameter {} has payload length {} but shape {:?}",
                    p.name,
                    p.value.len(),
                    p.shape
                )));
            }
            if index.insert(p.name.clone(), ParamId(i)).is_some() {
                return Err(Error::Malformed(format!("duplicate parameter {}", p.name)));
            }
        }
        let grads = Gradients {
            bufs: s.params.iter().map(|p| vec![0.0; p.len()]).collect(),
        };
        Ok(Self {
            params: s.params,
            index,
            grads,
            step: s.step,
            seed: s.seed,
        })
    }
}

/// Serializable parameter payload: names, shapes, values and optimizer state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StoreSnapshot {
    pub seed: u64,
    pub step: u64,
    pub params: Vec<Param>,
}
