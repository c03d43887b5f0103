use serde::{Deserialize, Serialize};

use crate::error::OptimError;

/// Constants of the multi-stage projected SGD.
///
/// `t_multiplier` and `gamma_divisor` scale the per-stage iteration count and the
/// base step size; the worst-case analysis uses 40000 and 100, which the
/// [`PsgdConfig::paper`] constructor reproduces.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PsgdConfig {
    /// Initial optimality gap bound.
    pub eps0: f64,
    /// Target optimality gap.
    pub eps: f64,
    /// Local growth rate.
    pub eta: f64,
    /// Root of the gradient second-moment bound.
    pub g: f64,
    pub t_multiplier: f64,
    pub gamma_divisor: f64,
    /// Hard cap on iterations per stage.
    pub t_cap: usize,
    pub seed: u64,
}

pub const PAPER_T_MULTIPLIER: f64 = 40_000.0;
pub const PAPER_GAMMA_DIVISOR: f64 = 100.0;
pub const DESK_T_MULTIPLIER: f64 = 40.0;
pub const DESK_T_CAP: usize = 200_000;

impl PsgdConfig {
    pub fn paper(eps0: f64, eps: f64, eta: f64, g: f64, seed: u64) -> Self {
        Self {
            eps0,
            eps,
            eta,
            g,
            t_multiplier: PAPER_T_MULTIPLIER,
            gamma_divisor: PAPER_GAMMA_DIVISOR,
            t_cap: usize::MAX,
            seed,
        }
    }

    pub fn desk(eps0: f64, eps: f64, eta: f64, g: f64, seed: u64) -> Self {
        Self {
            t_multiplier: DESK_T_MULTIPLIER,
            t_cap: DESK_T_CAP,
            ..Self::paper(eps0, eps, eta, g, seed)
        }
    }

    pub fn validate(&self) -> Result<(), OptimError> {
        let positive = |v: f64| v > 0.0 && v.is_finite();
        if !(positive(self.eps) && self.eps0 >= self.eps && self.eps0.is_finite()) {
            return Err(OptimError::Config(format!(
                "need eps0 >= eps > 0, got eps0 = {}, eps = {}",
                self.eps0, self.eps
            )));
        }
        if !(positive(self.eta) && positive(self.g)) {
            return Err(OptimError::Config(format!(
                "eta and G must be positive, got {} and {}",
                self.eta, self.g
            )));
        }
        if !(positive(self.t_multiplier) && positive(self.gamma_divisor)) {
            return Err(OptimError::Config(
                "t_multiplier and gamma_divisor must be positive".into(),
            ));
        }
        if self.t_cap == 0 {
            return Err(OptimError::Config("t_cap must be at least 1".into()));
        }
        Ok(())
    }
}

/// Stage count, initial trust radius, base step size and per-stage iterations.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub stages: usize,
    pub d0: f64,
    pub gamma0: f64,
    pub steps: usize,
}

impl Schedule {
    /// `gamma0 * 2^-stage`
    pub fn gamma(&self, stage: usize) -> f64 {
        self.gamma0 * 2f64.powi(-(stage as i32))
    }

    /// `d0 * 2^-stage`
    pub fn radius(&self, stage: usize) -> f64 {
        self.d0 * 2f64.powi(-(stage as i32))
    }
}

/// `tau = ceil(log2(eps0 / eps))`, `D0 = 2 eps0 / (eta sqrt(eps))`,
/// `gamma0 = eps0 / (divisor G^2 tau)`, `T = min(cap, ceil(mult G^2 tau^2 / (eta^2 eps)))`.
///
/// With `tau = 0` there is nothing to run and both `gamma0` and `T` are zero.
pub fn schedule(cfg: &PsgdConfig) -> Result<Schedule, OptimError> {
    cfg.validate()?;
    let stages = (cfg.eps0 / cfg.eps).log2().ceil().max(0.0) as usize;
    let d0 = 2.0 * cfg.eps0 / (cfg.eta * cfg.eps.sqrt());
    if stages == 0 {
        return Ok(Schedule {
            stages,
            d0,
            gamma0: 0.0,
            steps: 0,
        });
    }
    let tau = stages as f64;
    let g2 = cfg.g * cfg.g;
    let gamma0 = cfg.eps0 / (cfg.gamma_divisor * g2 * tau);
    let raw = (cfg.t_multiplier * g2 * tau * tau / (cfg.eta * cfg.eta * cfg.eps)).ceil();
    let steps = if raw >= cfg.t_cap as f64 {
        cfg.t_cap
    } else {
        (raw as usize).max(1)
    };
    Ok(Schedule {
        stages,
        d0,
        gamma0,
        steps,
    })
}
