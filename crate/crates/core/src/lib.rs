//! Probabilistic surrogate networks for trace-producing stochastic simulators.

pub mod error;
pub mod ic;
pub mod numerics;
pub mod ppl;
pub mod sims;
pub mod surrogate;
pub mod training;

pub use error::{Error, Result};
pub use numerics::{CounterRng, DistKind, Distribution, Value};
pub use ppl::{Address, Controller, Observations, Program, Trace, TraceEntry};
pub use surrogate::{PsnConfig, SurrogateModel};
pub use training::{EpochRecord, TrainConfig, TrainMeta};
pub use ic::{IcConfig, ProposalModel};
