//! Recovery runs: instance construction, oracle warm starts, pilot estimation of the
//! gradient scale and boosted multi-stage projected SGD.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ModelError, OptimError};
use crate::likelihood::SelectionModel;
use crate::models::{validate_assumptions, InstanceSpec, RegressorMatrix};
use crate::optimizer::{
    cluster_boost, iterative_psgd, permutation_distance, ProjectionSet, PsgdConfig, PsgdOptions,
    StageTrace, TraceRow, DESK_T_CAP, DESK_T_MULTIPLIER, PAPER_GAMMA_DIVISOR,
};
use crate::rng::SimRng;
use crate::stats::DEFAULT_TAIL_TV;

const MAX_INSTANCE_TRIES: usize = 10_000;

/// Draw a `d x k` instance whose column norms are uniform on `[1, big_c]` and which
/// satisfies separability with margin `c`. Retries until valid.
pub fn random_instance<R: Rng + ?Sized>(
    d: usize,
    k: usize,
    c: f64,
    big_c: f64,
    rng: &mut R,
) -> Result<InstanceSpec, ModelError> {
    if !(big_c >= 1.0) || !(c > 0.0 && c <= 1.0) {
        return Err(ModelError::InvalidInstance(format!("need 0 < c <= 1 <= C, got c = {c}, C = {big_c}")));
    }
    for _ in 0..MAX_INSTANCE_TRIES {
        let mut w = DMatrix::from_fn(d, k, |_, _| rng.sample::<f64, _>(StandardNormal));
        for mut col in w.column_iter_mut() {
            let norm = rng.random_range(1.0..=big_c);
            let n = col.norm();
            col *= norm / n;
        }
        let spec = InstanceSpec {
            w_star: RegressorMatrix::new(w)?,
            c,
            big_c,
        };
        if validate_assumptions(&spec).is_empty() {
            return Ok(spec);
        }
    }
    Err(ModelError::InvalidInstance(format!(
        "no separable {d}x{k} instance found with c = {c}, C = {big_c}"
    )))
}

/// `W* + r0 V` for a uniformly random direction `V` with `|V|_F = 1`.
pub fn oracle_warm_start<R: Rng + ?Sized>(w_star: &DMatrix<f64>, r0: f64, rng: &mut R) -> DMatrix<f64> {
    let v = DMatrix::from_fn(w_star.nrows(), w_star.ncols(), |_, _| {
        rng.sample::<f64, _>(StandardNormal)
    });
    let n = v.norm();
    w_star + v * (r0 / n)
}

/// Root mean square of `draws` stochastic gradients at `w` on uniformly drawn
/// observations.
pub fn pilot_gradient_scale<M: SelectionModel>(
    w: &DMatrix<f64>,
    data: &[M::Obs],
    draws: usize,
    tail_tv: f64,
    rng: &mut SimRng,
) -> f64 {
    let mut acc = 0.0;
    for _ in 0..draws {
        let obs = &data[rng.random_range(0..data.len())];
        acc += M::stochastic_gradient(w, obs, tail_tv, rng).norm_squared();
    }
    (acc / draws as f64).sqrt()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecoveryConfig {
    /// Radius of the oracle warm start.
    pub r0: f64,
    /// Radius `D` of the feasible ball around the warm start; defaults to `2 r0`.
    pub feasible_radius: Option<f64>,
    /// Per-column norm cap `C`.
    pub column_cap: f64,
    pub eps: f64,
    pub eta: f64,
    /// Gradient scale `G`; estimated from a pilot batch when absent.
    pub g: Option<f64>,
    pub pilot_draws: usize,
    pub t_multiplier: f64,
    pub gamma_divisor: f64,
    pub t_cap: usize,
    pub reps: usize,
    pub boost_radius: f64,
    pub tail_tv: f64,
    pub seed: u64,
}

impl RecoveryConfig {
    pub fn desk(r0: f64, column_cap: f64, eps: f64, eta: f64, seed: u64) -> Self {
        Self {
            r0,
            feasible_radius: None,
            column_cap,
            eps,
            eta,
            g: None,
            pilot_draws: 2000,
            t_multiplier: DESK_T_MULTIPLIER,
            gamma_divisor: PAPER_GAMMA_DIVISOR,
            t_cap: DESK_T_CAP,
            reps: 24,
            boost_radius: 0.1,
            tail_tv: DEFAULT_TAIL_TV,
            seed,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RepOutcome {
    pub seed: u64,
    pub trace: StageTrace,
    /// Permutation-matched distance to the reference, when one is known.
    pub error: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BoostedRun {
    pub estimate: DMatrix<f64>,
    pub chosen: usize,
    pub support: usize,
    pub g: f64,
    pub eps0: f64,
    pub reps: Vec<RepOutcome>,
    /// Trace rows of the first repetition.
    pub rows: Vec<TraceRow>,
}

/// Boosted multi-stage projected SGD from the warm start `w0`.
///
/// `eps0 = G r0` bounds the initial gap. Each repetition uses its own generator
/// stream; `reference` only feeds the per-repetition error report.
pub fn boosted_psgd<M: SelectionModel>(
    data: &[M::Obs],
    w0: &DMatrix<f64>,
    cfg: &RecoveryConfig,
    reference: Option<&DMatrix<f64>>,
    opts: &PsgdOptions,
) -> Result<BoostedRun, OptimError> {
    if data.is_empty() {
        return Err(OptimError::Config("no observations".into()));
    }
    if cfg.reps == 0 {
        return Err(OptimError::Config("need at least one repetition".into()));
    }
    let root = SimRng::new(cfg.seed);
    let g = match cfg.g {
        Some(g) => g,
        None => pilot_gradient_scale::<M>(w0, data, cfg.pilot_draws, cfg.tail_tv, &mut root.split(u64::MAX)),
    };
    let eps0 = (g * cfg.r0).max(cfg.eps);
    let radius = cfg.feasible_radius.unwrap_or(2.0 * cfg.r0);
    let k = ProjectionSet::new(w0.clone(), radius, cfg.column_cap)?;
    let start = k.project(w0)?.point;

    let runs: Vec<Result<(DMatrix<f64>, RepOutcome, Vec<TraceRow>), OptimError>> = (0..cfg.reps)
        .into_par_iter()
        .map(|rep| {
            let seed = root.split(rep as u64).seed();
            let psgd = PsgdConfig {
                eps0,
                eps: cfg.eps,
                eta: cfg.eta,
                g,
                t_multiplier: cfg.t_multiplier,
                gamma_divisor: cfg.gamma_divisor,
                t_cap: cfg.t_cap,
                seed,
            };
            let rep_opts = if rep == 0 { opts.clone() } else { PsgdOptions::default() };
            let out = iterative_psgd(
                &psgd,
                &k,
                &start,
                |w, rng| {
                    let obs = &data[rng.random_range(0..data.len())];
                    M::stochastic_gradient(w, obs, cfg.tail_tv, rng)
                },
                &rep_opts,
            )?;
            let error = match reference {
                Some(r) => Some(permutation_distance(&out.estimate, r)?.distance),
                None => None,
            };
            Ok((
                out.estimate,
                RepOutcome {
                    seed,
                    trace: out.trace,
                    error,
                },
                out.rows,
            ))
        })
        .collect();

    let mut estimates = Vec::with_capacity(cfg.reps);
    let mut reps = Vec::with_capacity(cfg.reps);
    let mut rows = Vec::new();
    for (i, r) in runs.into_iter().enumerate() {
        let (est, rep, r_rows) = r?;
        estimates.push(est);
        reps.push(rep);
        if i == 0 {
            rows = r_rows;
        }
    }
    let boosted = cluster_boost(&estimates, cfg.boost_radius)?;
    Ok(BoostedRun {
        estimate: boosted.estimate,
        chosen: boosted.index,
        support: boosted.support,
        g,
        eps0,
        reps,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::likelihood::MaxSelection;

    #[test]
    fn random_instances_are_valid() {
        let mut rng = SimRng::new(1);
        for _ in 0..20 {
            let spec = random_instance(10, 2, 0.5, 1.5, &mut rng).unwrap();
            assert!(validate_assumptions(&spec).is_empty());
            assert_eq!(spec.w_star.dim(), 10);
        }
        assert!(random_instance(2, 2, 0.5, 0.5, &mut rng).is_err());
    }

    #[test]
    fn warm_start_has_requested_radius() {
        let w = DMatrix::from_element(4, 3, 0.2);
        let w0 = oracle_warm_start(&w, 0.25, &mut SimRng::new(2));
        assert!(((&w0 - &w).norm() - 0.25).abs() < 1e-12);
    }

    #[test]
    fn single_regressor_matches_least_squares() {
        let mut rng = SimRng::new(3);
        let d = 2;
        let w_star = RegressorMatrix::new(DMatrix::from_column_slice(d, 1, &[0.8, -0.4])).unwrap();
        let data = MaxSelection::generate(&w_star, 20_000, &mut rng).unwrap();
        let mut xtx = DMatrix::<f64>::zeros(d, d);
        let mut xty = DMatrix::<f64>::zeros(d, 1);
        for o in &data {
            xtx += &o.x * o.x.transpose();
            xty += &o.x * o.y_max;
        }
        let ols = xtx.lu().solve(&xty).unwrap();
        let w0 = oracle_warm_start(w_star.as_matrix(), 0.2, &mut rng);
        // two long stages; the limit point is the empirical minimizer
        let mut cfg = RecoveryConfig::desk(0.2, 10.0, 0.1, 0.7, 4);
        cfg.feasible_radius = Some(2.0);
        cfg.g = Some(2.0);
        cfg.reps = 1;
        cfg.gamma_divisor = 10.0;
        cfg.t_multiplier = 20_000.0;
        cfg.t_cap = 10_000_000;
        let run = boosted_psgd::<MaxSelection>(&data, &w0, &cfg, Some(&ols), &PsgdOptions::default()).unwrap();
        assert!((&run.estimate - &ols).amax() < 1e-3, "{}", (&run.estimate - &ols).amax());
    }
}
