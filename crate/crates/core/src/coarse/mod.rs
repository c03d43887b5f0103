//! Gaussian mean estimation from coarse observations over convex partitions.

mod estimate;
mod partition;
mod sampler;
mod set;

pub use estimate::{
    coarse_gradient, estimate_coarse_mean, CoarseConfig, CoarseEstimate, CoarseTrace,
    FLAT_CURVATURE, LOCALIZATION_LOG_FACTOR, PILOT_DRAWS, PROBE_DRAWS,
};
pub use partition::Partition;
pub use sampler::{hit_and_run, sample_truncated_gaussian_on_set, HitAndRun, BURN_IN_PER_DIM};
pub use set::{localize, BoxSet, CoarseSet, Polytope};
