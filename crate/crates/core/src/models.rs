//! Problem instances and synthetic observations for the max-selection,
//! second-price and coarse-Gaussian observation models.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::coarse::{CoarseSet, Partition};
use crate::error::{CoarseError, ModelError};

/// `d x k` matrix whose columns are the regression vectors `w_1, ..., w_k`.
#[derive(Clone, Debug, PartialEq)]
pub struct RegressorMatrix(DMatrix<f64>);

impl RegressorMatrix {
    pub fn new(w: DMatrix<f64>) -> Result<Self, ModelError> {
        if w.nrows() == 0 || w.ncols() == 0 {
            return Err(ModelError::Dimension(format!(
                "regressor matrix must be at least 1x1, got {}x{}",
                w.nrows(),
                w.ncols()
            )));
        }
        if w.iter().any(|v| !v.is_finite()) {
            return Err(ModelError::NonFinite("regressor matrix"));
        }
        Ok(Self(w))
    }

    /// Build from column vectors, each of length `d`.
    pub fn from_columns(columns: &[Vec<f64>]) -> Result<Self, ModelError> {
        let k = columns.len();
        let d = columns.first().map_or(0, Vec::len);
        if columns.iter().any(|c| c.len() != d) {
            return Err(ModelError::Dimension("columns differ in length".into()));
        }
        Self::new(DMatrix::from_fn(d, k, |r, c| columns[c][r]))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn k(&self) -> usize {
        self.0.ncols()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }

    /// `W^T x`, the latent means for covariate `x`.
    pub fn latent_means(&self, x: &DVector<f64>) -> DVector<f64> {
        self.0.tr_mul(x)
    }

    pub fn columns(&self) -> Vec<Vec<f64>> {
        self.0
            .column_iter()
            .map(|c| c.iter().copied().collect())
            .collect()
    }
}

/// A regressor matrix together with its separability margin `c` and norm cap `C`.
#[derive(Clone, Debug, PartialEq)]
pub struct InstanceSpec {
    pub w_star: RegressorMatrix,
    pub c: f64,
    pub big_c: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    Separability,
    Boundedness,
    ParameterRange,
}

/// One failed assumption. `margin` is negative by the amount the condition misses.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub index: usize,
    pub kind: ViolationKind,
    pub margin: f64,
}

/// Check `|w_i|^2 >= c + max_{j != i} |<w_j, w_i>|` and `max_i |w_i| <= C`.
pub fn validate_assumptions(spec: &InstanceSpec) -> Vec<Violation> {
    let mut out = Vec::new();
    if !(spec.c > 0.0 && spec.c <= 1.0) {
        out.push(Violation {
            index: 0,
            kind: ViolationKind::ParameterRange,
            margin: if spec.c <= 0.0 { spec.c } else { 1.0 - spec.c },
        });
    }
    if !(spec.big_c >= 1.0) {
        out.push(Violation {
            index: 0,
            kind: ViolationKind::ParameterRange,
            margin: spec.big_c - 1.0,
        });
    }
    let w = spec.w_star.as_matrix();
    let k = w.ncols();
    let gram = w.tr_mul(w);
    for i in 0..k {
        let cross = (0..k)
            .filter(|&j| j != i)
            .map(|j| gram[(j, i)].abs())
            .fold(0.0, f64::max);
        let sep = gram[(i, i)] - spec.c - cross;
        if sep < 0.0 {
            out.push(Violation {
                index: i,
                kind: ViolationKind::Separability,
                margin: sep,
            });
        }
        let bound = spec.big_c - gram[(i, i)].sqrt();
        if bound < 0.0 {
            out.push(Violation {
                index: i,
                kind: ViolationKind::Boundedness,
                margin: bound,
            });
        }
    }
    out
}

/// `(x, y_max)` with `y_max = max_i <x, w_i> + xi_i`.
#[derive(Clone, Debug, PartialEq)]
pub struct MaxObservation {
    pub x: DVector<f64>,
    pub y_max: f64,
}

/// `(x, winner, y_smax)`: index of the largest latent outcome and the
/// second-largest value. `winner` is zero-based.
#[derive(Clone, Debug, PartialEq)]
pub struct SecondPriceObservation {
    pub x: DVector<f64>,
    pub winner: usize,
    pub y_smax: f64,
}

/// The cell of the partition that contained the hidden Gaussian draw.
#[derive(Clone, Debug, PartialEq)]
pub struct CoarseObservation {
    pub set: CoarseSet,
}

/// Latent draw behind a self-selection observation; only produced by the
/// `*_with_latents` generators.
#[derive(Clone, Debug, PartialEq)]
pub struct Latent {
    pub x: DVector<f64>,
    pub noise: DVector<f64>,
    pub y: DVector<f64>,
}

fn draw_latent<R: Rng + ?Sized>(w: &RegressorMatrix, rng: &mut R) -> Latent {
    let d = w.dim();
    let k = w.k();
    let x = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
    let noise = DVector::from_fn(k, |_, _| rng.sample::<f64, _>(StandardNormal));
    let y = w.latent_means(&x) + &noise;
    Latent { x, noise, y }
}

/// Lowest index attaining the maximum.
fn argmax(y: &DVector<f64>) -> usize {
    let mut best = 0;
    for i in 1..y.len() {
        if y[i] > y[best] {
            best = i;
        }
    }
    best
}

pub fn gen_max_observations<R: Rng + ?Sized>(
    w_star: &RegressorMatrix,
    n: usize,
    rng: &mut R,
) -> Vec<MaxObservation> {
    gen_max_observations_with_latents(w_star, n, rng)
        .into_iter()
        .map(|(obs, _)| obs)
        .collect()
}

pub fn gen_max_observations_with_latents<R: Rng + ?Sized>(
    w_star: &RegressorMatrix,
    n: usize,
    rng: &mut R,
) -> Vec<(MaxObservation, Latent)> {
    (0..n)
        .map(|_| {
            let latent = draw_latent(w_star, rng);
            let y_max = latent.y.max();
            let obs = MaxObservation {
                x: latent.x.clone(),
                y_max,
            };
            (obs, latent)
        })
        .collect()
}

pub fn gen_second_price_observations<R: Rng + ?Sized>(
    w_star: &RegressorMatrix,
    n: usize,
    rng: &mut R,
) -> Result<Vec<SecondPriceObservation>, ModelError> {
    Ok(gen_second_price_observations_with_latents(w_star, n, rng)?
        .into_iter()
        .map(|(obs, _)| obs)
        .collect())
}

pub fn gen_second_price_observations_with_latents<R: Rng + ?Sized>(
    w_star: &RegressorMatrix,
    n: usize,
    rng: &mut R,
) -> Result<Vec<(SecondPriceObservation, Latent)>, ModelError> {
    if w_star.k() < 2 {
        return Err(ModelError::TooFewRegressors(w_star.k()));
    }
    Ok((0..n)
        .map(|_| {
            let latent = draw_latent(w_star, rng);
            let winner = argmax(&latent.y);
            let y_smax = latent
                .y
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != winner)
                .map(|(_, &v)| v)
                .fold(f64::NEG_INFINITY, f64::max);
            let obs = SecondPriceObservation {
                x: latent.x.clone(),
                winner,
                y_smax,
            };
            (obs, latent)
        })
        .collect())
}

pub fn gen_coarse_observations<R: Rng + ?Sized>(
    mu_star: &DVector<f64>,
    partition: &Partition,
    n: usize,
    rng: &mut R,
) -> Result<Vec<CoarseObservation>, CoarseError> {
    Ok(gen_coarse_observations_with_latents(mu_star, partition, n, rng)?
        .into_iter()
        .map(|(obs, _)| obs)
        .collect())
}

pub fn gen_coarse_observations_with_latents<R: Rng + ?Sized>(
    mu_star: &DVector<f64>,
    partition: &Partition,
    n: usize,
    rng: &mut R,
) -> Result<Vec<(CoarseObservation, DVector<f64>)>, CoarseError> {
    let d = mu_star.len();
    (0..n)
        .map(|_| {
            let z = DVector::from_fn(d, |i, _| mu_star[i] + rng.sample::<f64, _>(StandardNormal));
            let set = partition.locate(&z)?;
            Ok((CoarseObservation { set }, z))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SimRng;
    use std::f64::consts::PI;

    fn spec(cols: &[Vec<f64>], c: f64, big_c: f64) -> InstanceSpec {
        InstanceSpec {
            w_star: RegressorMatrix::from_columns(cols).unwrap(),
            c,
            big_c,
        }
    }

    fn mean_se(v: &[f64]) -> (f64, f64) {
        let n = v.len() as f64;
        let m = v.iter().sum::<f64>() / n;
        let var = v.iter().map(|a| (a - m).powi(2)).sum::<f64>() / (n - 1.0);
        (m, (var / n).sqrt())
    }

    #[test]
    fn rejects_bad_matrices() {
        assert!(RegressorMatrix::new(DMatrix::zeros(0, 2)).is_err());
        assert!(RegressorMatrix::new(DMatrix::from_element(2, 2, f64::NAN)).is_err());
    }

    #[test]
    fn assumption_examples() {
        assert!(validate_assumptions(&spec(&[vec![1.0, 0.0]], 0.5, 1.0)).is_empty());
        assert!(
            validate_assumptions(&spec(&[vec![1.0, 0.0], vec![0.0, 1.0]], 0.5, 1.0)).is_empty()
        );
        let v = validate_assumptions(&spec(&[vec![1.0, 0.0], vec![1.0, 0.0]], 0.5, 1.0));
        assert_eq!(v.len(), 2);
        assert!(v.iter().all(|x| x.kind == ViolationKind::Separability));
        assert_eq!(v[0].index, 0);
        assert_eq!(v[1].index, 1);
        assert!((v[0].margin + 0.5).abs() < 1e-15);
    }

    #[test]
    fn boundedness_violation_reports_margin() {
        let v = validate_assumptions(&spec(&[vec![2.0, 0.0]], 0.5, 1.5));
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].kind, ViolationKind::Boundedness);
        assert!((v[0].margin + 0.5).abs() < 1e-15);
    }

    #[test]
    fn max_of_single_null_regressor_is_standard_normal() {
        let w = RegressorMatrix::new(DMatrix::zeros(3, 1)).unwrap();
        let obs = gen_max_observations(&w, 100_000, &mut SimRng::new(5));
        let ys: Vec<f64> = obs.iter().map(|o| o.y_max).collect();
        let (m, se) = mean_se(&ys);
        assert!(m.abs() <= 3.0 * se, "mean {m} se {se}");
    }

    #[test]
    fn max_of_two_null_regressors() {
        let w = RegressorMatrix::new(DMatrix::zeros(2, 2)).unwrap();
        let obs = gen_max_observations(&w, 100_000, &mut SimRng::new(6));
        let ys: Vec<f64> = obs.iter().map(|o| o.y_max).collect();
        let (m, se) = mean_se(&ys);
        assert!((m - 1.0 / PI.sqrt()).abs() <= 3.0 * se, "mean {m} se {se}");
    }

    #[test]
    fn max_is_consistent_with_latents() {
        let w = RegressorMatrix::from_columns(&[vec![1.0, 0.2, -0.3], vec![-0.5, 1.0, 0.1]])
            .unwrap();
        for (obs, lat) in gen_max_observations_with_latents(&w, 2000, &mut SimRng::new(7)) {
            let mu = w.latent_means(&lat.x);
            for i in 0..w.k() {
                assert!(obs.y_max >= mu[i] + lat.noise[i]);
            }
            assert_eq!(obs.y_max, lat.y.max());
            assert_eq!(obs.x, lat.x);
        }
    }

    #[test]
    fn second_price_requires_two() {
        let w = RegressorMatrix::new(DMatrix::zeros(2, 1)).unwrap();
        assert_eq!(
            gen_second_price_observations(&w, 1, &mut SimRng::new(1)).unwrap_err(),
            ModelError::TooFewRegressors(1)
        );
    }

    #[test]
    fn second_price_latent_consistency_and_null_mean() {
        let w = RegressorMatrix::new(DMatrix::zeros(2, 2)).unwrap();
        let data = gen_second_price_observations_with_latents(&w, 100_000, &mut SimRng::new(8))
            .unwrap();
        let mut ys = Vec::with_capacity(data.len());
        for (obs, lat) in &data {
            assert!(obs.y_smax <= lat.y[obs.winner]);
            assert_eq!(obs.winner, argmax(&lat.y));
            ys.push(obs.y_smax);
        }
        let (m, se) = mean_se(&ys);
        assert!((m + 1.0 / PI.sqrt()).abs() <= 3.0 * se, "mean {m} se {se}");
    }

    #[test]
    fn symmetric_second_price_winner_is_uniform() {
        let w = RegressorMatrix::from_columns(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let obs = gen_second_price_observations(&w, 100_000, &mut SimRng::new(9)).unwrap();
        let n1 = obs.iter().filter(|o| o.winner == 0).count() as f64;
        let n = obs.len() as f64;
        let chi2 = 2.0 * (n1 - n / 2.0).powi(2) / (n / 2.0);
        // chi-square(1) 99th percentile
        assert!(chi2 < 6.634_896_601, "chi2 {chi2}");
    }

    #[test]
    fn argmax_ties_go_to_lowest_index() {
        assert_eq!(argmax(&DVector::from_vec(vec![1.0, 3.0, 3.0])), 1);
    }

    #[test]
    fn generation_is_deterministic() {
        let w = RegressorMatrix::from_columns(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let a = gen_second_price_observations(&w, 50, &mut SimRng::new(3)).unwrap();
        let b = gen_second_price_observations(&w, 50, &mut SimRng::new(3)).unwrap();
        assert_eq!(a, b);
    }
}
