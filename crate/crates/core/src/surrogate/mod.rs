//! Probabilistic surrogate network: an autoregressive model over traces that
//! learns value distributions and control flow of a reference program.

pub mod checkpoint;
pub mod model;
pub mod registry;
pub mod sample;
pub mod train;

pub use model::{Cursor, PsnConfig, SurrogateModel};
pub use registry::{Next, Registry, SiteSchema, ValueStats};
pub use sample::{psn_sample, run_surrogate, MissingObservation, SurrogateRun};
pub use train::psn_train;
