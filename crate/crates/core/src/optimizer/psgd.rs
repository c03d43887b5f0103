use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::projection::ProjectionSet;
use super::schedule::{schedule, PsgdConfig, Schedule};
use crate::error::OptimError;
use crate::rng::SimRng;

/// Feasibility tolerance for the starting point.
const START_TOL: f64 = 1e-8;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PsgdOptions {
    /// Record [`TraceRow`]s.
    pub trace: bool,
    /// Keep every `trace_every`-th step (and the last step of each stage).
    pub trace_every: usize,
}

impl PsgdOptions {
    pub fn traced(every: usize) -> Self {
        Self {
            trace: true,
            trace_every: every.max(1),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    /// 1-based stage index.
    pub stage: usize,
    pub gamma: f64,
    pub radius: f64,
    pub iterations: usize,
    /// Frobenius distance between this stage's average and its starting point.
    pub moved: f64,
    /// Projections that hit the sweep cap.
    pub projection_warnings: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageTrace {
    pub schedule: Schedule,
    pub stages: Vec<StageRecord>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub stage: usize,
    pub step: usize,
    pub gamma: f64,
    pub slack: f64,
    pub grad_norm: f64,
}

impl TraceRow {
    pub const CSV_HEADER: &'static str = "stage,step,gamma,slack,grad_norm";

    pub fn csv(&self) -> String {
        format!(
            "{},{},{:e},{:e},{:e}",
            self.stage, self.step, self.gamma, self.slack, self.grad_norm
        )
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PsgdOutcome {
    pub estimate: DMatrix<f64>,
    pub trace: StageTrace,
    pub rows: Vec<TraceRow>,
}

/// Multi-stage projected SGD.
///
/// Stage `l = 1..=tau` runs `T` steps of `w <- P(w - gamma_l g(w))`, where `P`
/// projects onto `K` intersected with the ball of radius `D_l` around the previous
/// stage output, and returns the uniform average of its iterates. The oracle gets
/// a generator seeded from `cfg.seed`.
pub fn iterative_psgd<F>(
    cfg: &PsgdConfig,
    k: &ProjectionSet,
    w0: &DMatrix<f64>,
    mut grad: F,
    opts: &PsgdOptions,
) -> Result<PsgdOutcome, OptimError>
where
    F: FnMut(&DMatrix<f64>, &mut SimRng) -> DMatrix<f64>,
{
    let sched = schedule(cfg)?;
    if w0.shape() != k.center.shape() {
        return Err(OptimError::Shape(format!(
            "start {:?} vs feasible set {:?}",
            w0.shape(),
            k.center.shape()
        )));
    }
    if !k.contains(w0, START_TOL) {
        return Err(OptimError::Config(format!(
            "start point is infeasible (slack {:e})",
            k.slack(w0)
        )));
    }
    let mut rng = SimRng::new(cfg.seed);
    let mut prev = w0.clone();
    let mut stages = Vec::with_capacity(sched.stages);
    let mut rows = Vec::new();
    let every = opts.trace_every.max(1);

    for stage in 1..=sched.stages {
        let gamma = sched.gamma(stage);
        let radius = sched.radius(stage);
        let ks = k.with_stage_ball(prev.clone(), radius);
        let mut w = prev.clone();
        let mut sum = DMatrix::zeros(w.nrows(), w.ncols());
        let mut warnings = 0;
        for step in 1..=sched.steps {
            let g = grad(&w, &mut rng);
            if g.shape() != w.shape() {
                return Err(OptimError::Shape(format!(
                    "gradient {:?} vs iterate {:?}",
                    g.shape(),
                    w.shape()
                )));
            }
            if g.iter().any(|v| !v.is_finite()) {
                return Err(OptimError::NonFiniteGradient { stage, step });
            }
            let p = ks.project(&(&w - &g * gamma))?;
            if !p.converged {
                warnings += 1;
            }
            w = p.point;
            sum += &w;
            if opts.trace && (step % every == 0 || step == sched.steps) {
                rows.push(TraceRow {
                    stage,
                    step,
                    gamma,
                    slack: ks.slack(&w),
                    grad_norm: g.norm(),
                });
            }
        }
        let avg = sum / sched.steps as f64;
        stages.push(StageRecord {
            stage,
            gamma,
            radius,
            iterations: sched.steps,
            moved: (&avg - &prev).norm(),
            projection_warnings: warnings,
        });
        prev = avg;
    }

    Ok(PsgdOutcome {
        estimate: prev,
        trace: StageTrace {
            schedule: sched,
            stages,
        },
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn randn(d: usize, k: usize, rng: &mut SimRng) -> DMatrix<f64> {
        DMatrix::from_fn(d, k, |_, _| rng.sample::<f64, _>(StandardNormal))
    }

    /// F(w) = |w - w*|^2 / 2 with a unit-distance start.
    fn toy(seed: u64, sigma: f64, t_cap: usize) -> (f64, f64, PsgdOutcome) {
        let d = 5;
        let mut rng = SimRng::new(seed);
        let w_star = randn(d, 1, &mut rng);
        let dir = randn(d, 1, &mut rng);
        let w0 = &w_star + &dir / dir.norm();
        let eps0 = 0.5;
        let eps = 0.01;
        let g = (1.0 + sigma * sigma * d as f64).sqrt();
        let mut cfg = PsgdConfig::desk(eps0, eps, 1.0, g, seed);
        cfg.t_cap = t_cap;
        let k = ProjectionSet::new(w0.clone(), 10.0, f64::INFINITY).unwrap();
        let out = iterative_psgd(
            &cfg,
            &k,
            &w0,
            |w, r| {
                let noise = DMatrix::from_fn(d, 1, |_, _| sigma * r.sample::<f64, _>(StandardNormal));
                w - &w_star + noise
            },
            &PsgdOptions::default(),
        )
        .unwrap();
        let err = (&out.estimate - &w_star).norm();
        (err, eps, out)
    }

    #[test]
    fn zero_stages_returns_start() {
        let w0 = DMatrix::from_element(2, 2, 0.3);
        let k = ProjectionSet::new(w0.clone(), 1.0, 1.0).unwrap();
        let cfg = PsgdConfig::desk(0.1, 0.1, 1.0, 1.0, 0);
        let out = iterative_psgd(&cfg, &k, &w0, |_, _| unreachable!(), &PsgdOptions::default())
            .unwrap();
        assert_eq!(out.estimate, w0);
        assert!(out.trace.stages.is_empty());
    }

    #[test]
    fn non_finite_gradient_aborts() {
        let w0 = DMatrix::zeros(2, 1);
        let k = ProjectionSet::new(w0.clone(), 1.0, 1.0).unwrap();
        let cfg = PsgdConfig::desk(1.0, 0.5, 1.0, 1.0, 0);
        let err = iterative_psgd(
            &cfg,
            &k,
            &w0,
            |_, _| DMatrix::from_element(2, 1, f64::NAN),
            &PsgdOptions::default(),
        )
        .unwrap_err();
        assert_eq!(err, OptimError::NonFiniteGradient { stage: 1, step: 1 });
    }

    #[test]
    fn infeasible_start_rejected() {
        let k = ProjectionSet::new(DMatrix::zeros(2, 1), 1.0, 1.0).unwrap();
        let cfg = PsgdConfig::desk(1.0, 0.5, 1.0, 1.0, 0);
        let w0 = DMatrix::from_element(2, 1, 5.0);
        assert!(iterative_psgd(&cfg, &k, &w0, |w, _| w.clone(), &PsgdOptions::default()).is_err());
    }

    #[test]
    fn quadratic_exact_gradients() {
        let (err, eps, out) = toy(11, 0.0, 20_000);
        assert!(err <= (2.0 * eps).sqrt(), "err {err}");
        for (i, s) in out.trace.stages.iter().enumerate() {
            assert_eq!(s.gamma, out.trace.schedule.gamma0 * 2f64.powi(-(i as i32 + 1)));
            assert_eq!(s.radius, out.trace.schedule.d0 * 2f64.powi(-(i as i32 + 1)));
        }
    }

    #[test]
    fn quadratic_noisy_gradients() {
        let (err, eps, _) = toy(12, 0.5, 20_000);
        assert!(err <= (2.0 * eps).sqrt(), "err {err}");
    }

    #[test]
    fn iterates_feasible_and_traced() {
        let d = 3;
        let mut rng = SimRng::new(5);
        let target = randn(d, 2, &mut rng) * 3.0;
        let w0 = DMatrix::zeros(d, 2);
        let k = ProjectionSet::new(w0.clone(), 1.5, 1.0).unwrap();
        let mut cfg = PsgdConfig::desk(4.0, 0.1, 0.5, 5.0, 3);
        cfg.t_cap = 500;
        let out = iterative_psgd(&cfg, &k, &w0, |w, _| w - &target, &PsgdOptions::traced(1)).unwrap();
        assert_eq!(out.rows.len(), out.trace.schedule.stages * 500);
        for r in &out.rows {
            assert!(r.slack >= -1e-8, "{r:?}");
        }
        assert!(k.contains(&out.estimate, 1e-8));
    }
}
