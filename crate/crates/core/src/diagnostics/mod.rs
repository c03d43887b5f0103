//! Numerical verification harness.

pub mod gof;
mod probes;
pub mod quad;
mod report;

pub use probes::{
    average_hessian, fd_gradient_check, gradient_second_moment, growth_probe, growth_report,
    hessian_min_eig, hessian_min_eig_estimate, scaling_report, second_moment_scaling,
    stationarity_test, GrowthRow, ScalingRow, MAX_HESSIAN_DIM,
};
pub use report::{mean_se, pairwise_sum, render_table, DiagnosticReport};
