//! Inference compilation: a proposal network trained on prior traces and an
//! importance sampler that drives either the program or the surrogate.

pub mod checkpoint;
pub mod controller;
pub mod estimators;
pub mod model;
pub mod sis;
pub mod train;

pub use controller::IcController;
pub use estimators::{bootstrap_se, ess, estimate, normalized_weights, posterior_expectation, Estimate};
pub use model::{IcConfig, IcSession, LatentSite, ProposalModel};
pub use sis::{sis_infer, Executor, ProposalSource, Query, SisConfig, WeightedSample};
pub use train::{ic_train, summarize_traces};
