//! Multi-stage projected SGD for objectives with local growth, projection onto
//! the feasible sets, and majority-cluster boosting up to column permutations.

mod assignment;
mod boost;
mod projection;
mod psgd;
mod schedule;

pub use assignment::{brute_force_assignment, hungarian, permutation_distance, Matching};
pub use boost::{cluster_boost, Boosted};
pub use projection::{Projection, ProjectionSet};
pub use psgd::{iterative_psgd, PsgdOptions, PsgdOutcome, StageRecord, StageTrace, TraceRow};
pub use schedule::{
    schedule, PsgdConfig, Schedule, DESK_T_CAP, DESK_T_MULTIPLIER, PAPER_GAMMA_DIVISOR,
    PAPER_T_MULTIPLIER,
};
