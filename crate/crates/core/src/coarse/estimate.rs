use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::sampler::sample_truncated_gaussian_on_set;
use super::set::{localize, CoarseSet};
use crate::error::{CoarseError, OptimError};
use crate::models::CoarseObservation;
use crate::optimizer::{iterative_psgd, ProjectionSet, PsgdConfig, PsgdOptions, StageTrace, TraceRow};
use crate::rng::SimRng;

/// Constant in front of `ln(m d / delta)` in the default localization radius.
pub const LOCALIZATION_LOG_FACTOR: f64 = 10.0;
/// Draws used to estimate the gradient second moment when none is supplied.
pub const PILOT_DRAWS: usize = 2000;
/// Draws per side of each curvature probe.
pub const PROBE_DRAWS: usize = 4000;
/// Curvature below this along some axis marks the run as non-identifiable.
pub const FLAT_CURVATURE: f64 = 0.1;

/// Settings for the two-stage coarse mean estimator.
///
/// `psgd` supplies the final accuracy `eps`, the schedule multipliers, the cap and
/// the seed. Its `eps0` and `eta` are derived here (`eta = sqrt(2) alpha_hint`), and
/// its `g` is used only when `pilot_g` is false.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoarseConfig {
    /// Bound `D` on `|mu*|_2`; also the radius of the feasible ball around 0.
    pub radius: f64,
    /// Localization radius `R`. Defaults to `D + 10 ln(m d / delta)`.
    pub localization: Option<f64>,
    pub delta: f64,
    pub alpha_hint: f64,
    /// Accuracy targeted by the first stage.
    pub stage_a_eps: f64,
    /// Estimate `G` from a pilot batch at the starting point.
    pub pilot_g: bool,
    pub psgd: PsgdConfig,
}

impl CoarseConfig {
    pub fn new(radius: f64, alpha_hint: f64, psgd: PsgdConfig) -> Self {
        Self {
            radius,
            localization: None,
            delta: 1e-3,
            alpha_hint,
            stage_a_eps: 1.0,
            pilot_g: true,
            psgd,
        }
    }

    pub fn localization_radius(&self, m: usize, d: usize) -> f64 {
        self.localization.unwrap_or_else(|| {
            self.radius + LOCALIZATION_LOG_FACTOR * ((m * d) as f64 / self.delta).ln()
        })
    }

    fn validate(&self, m: usize, d: usize) -> Result<(), OptimError> {
        let pos = |v: f64| v > 0.0 && v.is_finite();
        if !pos(self.radius) || !pos(self.alpha_hint) || !pos(self.stage_a_eps) {
            return Err(OptimError::Config(
                "radius, alpha_hint and stage_a_eps must be positive".into(),
            ));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(OptimError::Config(format!("delta must lie in (0, 1), got {}", self.delta)));
        }
        let r = self.localization_radius(m, d);
        if !(r >= self.radius) {
            return Err(OptimError::Config(format!(
                "localization radius {r} is below the mean bound {}",
                self.radius
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoarseTrace {
    pub localization: f64,
    pub g: f64,
    pub eta: f64,
    /// Fraction of observations whose set changed under localization.
    pub altered_fraction: f64,
    pub stage_a: StageTrace,
    pub stage_b: StageTrace,
    /// Estimated curvature of the objective along each coordinate axis at the
    /// first-stage output.
    pub curvature: Vec<f64>,
    pub non_identifiable: bool,
    #[serde(skip)]
    pub rows: Vec<TraceRow>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CoarseEstimate {
    pub mu_hat: DVector<f64>,
    pub trace: CoarseTrace,
}

/// `mu - y` with `y` drawn from `N(mu, I)` restricted to the localized set.
pub fn coarse_gradient<R: Rng + ?Sized>(
    mu: &DVector<f64>,
    obs: &CoarseObservation,
    r: f64,
    rng: &mut R,
) -> Result<DVector<f64>, CoarseError> {
    let set = localize(&obs.set, r);
    let y = sample_truncated_gaussian_on_set(mu, &set, rng)?;
    Ok(mu - y)
}

fn draw_gradient(
    mu: &DVector<f64>,
    sets: &[CoarseSet],
    rng: &mut SimRng,
) -> Result<DVector<f64>, CoarseError> {
    let i = rng.random_range(0..sets.len());
    let y = sample_truncated_gaussian_on_set(mu, &sets[i], rng)?;
    Ok(mu - y)
}

fn as_column(m: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_column_slice(m.as_slice())
}

fn run_stage(
    cfg: &PsgdConfig,
    k: &ProjectionSet,
    start: &DVector<f64>,
    sets: &[CoarseSet],
    opts: &PsgdOptions,
) -> Result<(DVector<f64>, StageTrace, Vec<TraceRow>), CoarseError> {
    let mut failure = None;
    let w0 = DMatrix::from_column_slice(start.len(), 1, start.as_slice());
    let out = iterative_psgd(
        cfg,
        k,
        &w0,
        |w, rng| match draw_gradient(&as_column(w), sets, rng) {
            Ok(g) => DMatrix::from_column_slice(g.len(), 1, g.as_slice()),
            Err(e) => {
                failure.get_or_insert(e);
                DMatrix::from_element(w.nrows(), 1, f64::NAN)
            }
        },
        opts,
    );
    if let Some(e) = failure {
        return Err(e);
    }
    let out = out?;
    Ok((as_column(&out.estimate), out.trace, out.rows))
}

/// Mean of `u^T (g(mu + s u) - g(mu - s u)) / (2 s)` over fresh draws, per axis `u`.
fn axis_curvature(
    mu: &DVector<f64>,
    sets: &[CoarseSet],
    rng: &mut SimRng,
) -> Result<Vec<f64>, CoarseError> {
    let s = 1.0;
    let d = mu.len();
    let mut out = Vec::with_capacity(d);
    for j in 0..d {
        let mut up = mu.clone();
        up[j] += s;
        let mut down = mu.clone();
        down[j] -= s;
        let mut acc = 0.0;
        for _ in 0..PROBE_DRAWS {
            acc += draw_gradient(&up, sets, rng)?[j] - draw_gradient(&down, sets, rng)?[j];
        }
        out.push(acc / (PROBE_DRAWS as f64 * 2.0 * s));
    }
    Ok(out)
}

/// Two-stage projected SGD on the coarse negative log-likelihood over `B(0, D)`.
///
/// The first stage starts at the origin with `eps0 = G D` and stops at
/// `stage_a_eps`; the second restarts from its output with `eps0 = 2 stage_a_eps`
/// and runs to `psgd.eps`.
pub fn estimate_coarse_mean(
    observations: &[CoarseObservation],
    cfg: &CoarseConfig,
    opts: &PsgdOptions,
) -> Result<CoarseEstimate, CoarseError> {
    let m = observations.len();
    let d = match observations.first() {
        Some(o) => o.set.dim(),
        None => return Err(CoarseError::InvalidSet("no observations".into())),
    };
    if let Some(o) = observations.iter().find(|o| o.set.dim() != d) {
        return Err(CoarseError::InvalidSet(format!(
            "mixed dimensions {d} and {}",
            o.set.dim()
        )));
    }
    cfg.validate(m, d)?;
    let r = cfg.localization_radius(m, d);
    let mut altered = 0usize;
    let sets: Vec<CoarseSet> = observations
        .iter()
        .map(|o| {
            let s = localize(&o.set, r);
            if s != o.set {
                altered += 1;
            }
            s
        })
        .collect();

    let root = SimRng::new(cfg.psgd.seed);
    let origin = DVector::zeros(d);
    let g = if cfg.pilot_g {
        let mut rng = root.split(0);
        let mut acc = 0.0;
        for _ in 0..PILOT_DRAWS {
            acc += draw_gradient(&origin, &sets, &mut rng)?.norm_squared();
        }
        (acc / PILOT_DRAWS as f64).sqrt()
    } else {
        cfg.psgd.g
    };
    let eta = std::f64::consts::SQRT_2 * cfg.alpha_hint;
    let k = ProjectionSet::new(DMatrix::zeros(d, 1), cfg.radius, f64::INFINITY)?;

    let eps0_a = (g * cfg.radius).max(cfg.stage_a_eps);
    let cfg_a = PsgdConfig {
        eps0: eps0_a,
        eps: cfg.stage_a_eps,
        eta,
        g,
        seed: root.split(1).seed(),
        ..cfg.psgd.clone()
    };
    let (mu_a, stage_a, mut rows) = run_stage(&cfg_a, &k, &origin, &sets, opts)?;

    let eps_b = cfg.psgd.eps.min(2.0 * cfg.stage_a_eps);
    let cfg_b = PsgdConfig {
        eps0: 2.0 * cfg.stage_a_eps,
        eps: eps_b,
        eta,
        g,
        seed: root.split(2).seed(),
        ..cfg.psgd.clone()
    };
    let (mu_hat, stage_b, rows_b) = run_stage(&cfg_b, &k, &mu_a, &sets, opts)?;
    rows.extend(rows_b);

    let curvature = axis_curvature(&mu_a, &sets, &mut root.split(3))?;
    let non_identifiable = curvature.iter().any(|&c| c < FLAT_CURVATURE);

    Ok(CoarseEstimate {
        mu_hat,
        trace: CoarseTrace {
            localization: r,
            g,
            eta,
            altered_fraction: altered as f64 / m as f64,
            stage_a,
            stage_b,
            curvature,
            non_identifiable,
            rows,
        },
    })
}
