//! Dense math, distributions, reverse-mode gradients and optimisation.

pub mod adam;
pub mod checkpoint;
pub mod dist;
pub mod kernels;
pub mod lstm;
pub mod params;
pub mod rng;
pub mod tape;

pub use adam::{adam_step, AdamConfig};
pub use dist::{softmax, DistKind, Distribution, Value};
pub use lstm::{lstm_step, LstmParams, RecurrentState};
pub use params::{Gradients, Init, ParamId, ParamStore};
pub use rng::CounterRng;
pub use tape::{Graph, NodeId};

/// Floor added to every network-produced standard deviation.
pub const STD_FLOOR: f64 = 1e-3;
