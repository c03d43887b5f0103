pub mod coarse;
pub mod dataset;
pub mod diagnostics;
pub mod error;
pub mod experiment;
pub mod likelihood;
pub mod models;
pub mod optimizer;
pub mod rng;
pub mod stats;

pub use error::{CoarseError, DiagnosticError, ModelError, OptimError, StatsError};
pub use rng::SimRng;
