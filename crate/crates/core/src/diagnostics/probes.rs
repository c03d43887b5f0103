use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::report::{mean_se, pairwise_sum, DiagnosticReport};
use crate::error::DiagnosticError;
use crate::experiment::random_instance;
use crate::likelihood::SelectionModel;
use crate::models::RegressorMatrix;
use crate::rng::SimRng;

/// Largest `d k` accepted by the dense Hessian estimate.
pub const MAX_HESSIAN_DIM: usize = 64;

/// Compare `grad` against central differences of `loss` at `point`, entrywise.
///
/// The statistic is `max |fd - grad| / max(1, |grad|)`.
pub fn fd_gradient_check<L, G>(
    name: &str,
    loss: L,
    grad: G,
    point: &DMatrix<f64>,
    h: f64,
    threshold: f64,
) -> DiagnosticReport
where
    L: Fn(&DMatrix<f64>) -> f64,
    G: Fn(&DMatrix<f64>) -> DMatrix<f64>,
{
    let g = grad(point);
    let mut worst: f64 = 0.0;
    for i in 0..point.len() {
        let mut up = point.clone();
        up[i] += h;
        let mut down = point.clone();
        down[i] -= h;
        let fd = (loss(&up) - loss(&down)) / (2.0 * h);
        let err = (fd - g[i]).abs() / g[i].abs().max(1.0);
        worst = if err.is_nan() { f64::NAN } else { worst.max(err) };
    }
    DiagnosticReport::new(name, worst, threshold).with_samples("entries", point.len())
}

/// Average Hessian of the per-sample negative log-likelihood at `w`.
///
/// Per observation it is `(I - Cov[z | obs]) ⊗ x x^T` in column-major `vec(W)`
/// order, with the conditional covariance computed exactly.
pub fn average_hessian<M: SelectionModel>(
    w: &DMatrix<f64>,
    data: &[M::Obs],
) -> Result<DMatrix<f64>, DiagnosticError> {
    let (d, k) = w.shape();
    let dk = d * k;
    if dk > MAX_HESSIAN_DIM {
        return Err(DiagnosticError::TooLarge(dk));
    }
    if data.is_empty() {
        return Err(DiagnosticError::Input("no observations".into()));
    }
    let mut terms: Vec<Vec<f64>> = vec![Vec::with_capacity(data.len()); dk * dk];
    for obs in data {
        let x = M::covariates(obs);
        let mu = M::latent_means(w, obs);
        let info = DMatrix::identity(k, k) - M::conditional_cov(&mu, obs);
        for c1 in 0..k {
            for c2 in 0..k {
                for r1 in 0..d {
                    for r2 in 0..d {
                        let (i, j) = (c1 * d + r1, c2 * d + r2);
                        terms[j * dk + i].push(info[(c1, c2)] * x[r1] * x[r2]);
                    }
                }
            }
        }
    }
    let n = data.len() as f64;
    Ok(DMatrix::from_iterator(
        dk,
        dk,
        terms.iter().map(|t| pairwise_sum(t) / n),
    ))
}

/// Smallest eigenvalue of [`average_hessian`].
pub fn hessian_min_eig<M: SelectionModel>(
    w: &DMatrix<f64>,
    data: &[M::Obs],
) -> Result<f64, DiagnosticError> {
    let h = average_hessian::<M>(w, data)?;
    let eig = SymmetricEigen::new(h);
    Ok(eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min))
}

/// [`hessian_min_eig`] on `n_obs` fresh observations drawn at `w_star`.
pub fn hessian_min_eig_estimate<M: SelectionModel>(
    w: &DMatrix<f64>,
    w_star: &RegressorMatrix,
    n_obs: usize,
    rng: &mut SimRng,
) -> Result<f64, DiagnosticError> {
    let dk = w.len();
    if dk > MAX_HESSIAN_DIM {
        return Err(DiagnosticError::TooLarge(dk));
    }
    let data = M::generate(w_star, n_obs, rng).map_err(|e| DiagnosticError::Input(e.to_string()))?;
    hessian_min_eig::<M>(w, &data)
}

/// Mean exact gradient at `W*` over `n` fresh observations. The statistic is the
/// largest `|mean| / SE` across entries; passes at 4.
pub fn stationarity_test<M: SelectionModel>(
    w_star: &RegressorMatrix,
    n: usize,
    rng: &mut SimRng,
) -> Result<DiagnosticReport, DiagnosticError> {
    let seed = rng.seed();
    let data = M::generate(w_star, n, rng).map_err(|e| DiagnosticError::Input(e.to_string()))?;
    let w = w_star.as_matrix();
    let mut entries: Vec<Vec<f64>> = vec![Vec::with_capacity(n); w.len()];
    for obs in &data {
        let g = M::exact_gradient(w, obs);
        for (e, v) in entries.iter_mut().zip(g.iter()) {
            e.push(*v);
        }
    }
    let mut worst: f64 = 0.0;
    let mut worst_se = 0.0;
    for e in &entries {
        let (m, se) = mean_se(e);
        let z = m.abs() / se;
        if z > worst {
            worst = z;
            worst_se = se;
        }
    }
    Ok(DiagnosticReport::new(format!("stationarity[{}]", M::NAME), worst, 4.0)
        .with_se(worst_se)
        .with_samples("observations", n)
        .with_seed(seed))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GrowthRow {
    pub direction: usize,
    pub radius: f64,
    /// Mean of `nll(W* + r V) - nll(W*)` over a common sample.
    pub gap: f64,
    pub se: f64,
    /// Standard error of the change in gap from the previous radius (same sample).
    pub se_step: f64,
}

/// Coupled negative log-likelihood gaps along `directions` random unit directions.
pub fn growth_probe<M: SelectionModel>(
    w_star: &RegressorMatrix,
    radii: &[f64],
    n: usize,
    directions: usize,
    rng: &mut SimRng,
) -> Result<Vec<GrowthRow>, DiagnosticError> {
    let data = M::generate(w_star, n, rng).map_err(|e| DiagnosticError::Input(e.to_string()))?;
    let w = w_star.as_matrix();
    let base: Vec<f64> = data.iter().map(|o| M::nll(w, o)).collect();
    let mut rows = Vec::new();
    for dir in 0..directions {
        let v = DMatrix::from_fn(w.nrows(), w.ncols(), |_, _| rng.sample::<f64, _>(StandardNormal));
        let v = &v / v.norm();
        let mut prev = vec![0.0; n];
        for &r in radii {
            let wr = w + &v * r;
            let gaps: Vec<f64> = data
                .iter()
                .zip(&base)
                .map(|(o, b)| M::nll(&wr, o) - b)
                .collect();
            let (gap, se) = mean_se(&gaps);
            let steps: Vec<f64> = gaps.iter().zip(&prev).map(|(a, b)| a - b).collect();
            let (_, se_step) = mean_se(&steps);
            rows.push(GrowthRow {
                direction: dir,
                radius: r,
                gap,
                se,
                se_step,
            });
            prev = gaps;
        }
    }
    Ok(rows)
}

/// Largest violation, in standard errors, of "gap >= 0" and "gap nondecreasing in
/// the radius" across a [`growth_probe`] table. Passes at 4.
pub fn growth_report(rows: &[GrowthRow], seed: u64, n: usize) -> DiagnosticReport {
    let mut worst: f64 = f64::NEG_INFINITY;
    for (i, row) in rows.iter().enumerate() {
        if row.se > 0.0 {
            worst = worst.max(-row.gap / row.se);
        } else if row.gap < 0.0 {
            worst = f64::INFINITY;
        }
        if i > 0 && rows[i - 1].direction == row.direction {
            let step = row.gap - rows[i - 1].gap;
            if row.se_step > 0.0 {
                worst = worst.max(-step / row.se_step);
            } else if step < 0.0 {
                worst = f64::INFINITY;
            }
        }
    }
    DiagnosticReport::new("growth", worst, 4.0)
        .with_samples("observations", n)
        .with_samples("rows", rows.len())
        .with_seed(seed)
}

/// Mean squared Frobenius norm of the stochastic gradient at `w`, with its SE.
pub fn gradient_second_moment<M: SelectionModel>(
    w: &DMatrix<f64>,
    data: &[M::Obs],
    tail_tv: f64,
    rng: &mut SimRng,
) -> (f64, f64) {
    let sq: Vec<f64> = data
        .iter()
        .map(|o| M::stochastic_gradient(w, o, tail_tv, rng).norm_squared())
        .collect();
    mean_se(&sq)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    pub d: usize,
    pub second_moment: f64,
    pub se: f64,
}

/// `E|g|_F^2` at the truth of a random separable `d x k` instance, for each `d`.
pub fn second_moment_scaling<M: SelectionModel>(
    dims: &[usize],
    k: usize,
    n: usize,
    tail_tv: f64,
    rng: &mut SimRng,
) -> Result<Vec<ScalingRow>, DiagnosticError> {
    let mut out = Vec::with_capacity(dims.len());
    for &d in dims {
        let spec = random_instance(d, k, 0.5, 1.5, rng).map_err(|e| DiagnosticError::Input(e.to_string()))?;
        let data = M::generate(&spec.w_star, n, rng).map_err(|e| DiagnosticError::Input(e.to_string()))?;
        let (m, se) = gradient_second_moment::<M>(spec.w_star.as_matrix(), &data, tail_tv, rng);
        out.push(ScalingRow {
            d,
            second_moment: m,
            se,
        });
    }
    Ok(out)
}

/// Worst deviation of successive ratios `m(d') / m(d)` from `d' / d`, as a
/// multiplicative factor. Passes at 2.
pub fn scaling_report(rows: &[ScalingRow], seed: u64) -> DiagnosticReport {
    let worst = rows
        .windows(2)
        .map(|p| {
            let ratio = p[1].second_moment / p[0].second_moment;
            let linear = p[1].d as f64 / p[0].d as f64;
            (ratio / linear).max(linear / ratio)
        })
        .fold(1.0, f64::max);
    DiagnosticReport::new("second_moment_scaling", worst, 2.0)
        .with_samples("dims", rows.len())
        .with_seed(seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::likelihood::{MaxSelection, SecondPrice};

    fn instance(d: usize, k: usize, seed: u64) -> RegressorMatrix {
        random_instance(d, k, 0.5, 1.5, &mut SimRng::new(seed)).unwrap().w_star
    }

    #[test]
    fn quadratic_fd_is_exact() {
        let a = DMatrix::from_column_slice(2, 2, &[1.0, -2.0, 0.5, 3.0]);
        let r = fd_gradient_check(
            "quad",
            |w| 0.5 * (w - &a).norm_squared(),
            |w| w - &a,
            &DMatrix::from_element(2, 2, 0.3),
            1e-5,
            1e-9,
        );
        assert!(r.pass, "{r:?}");
    }

    #[test]
    fn model_gradients_match_differences() {
        let mut rng = SimRng::new(1);
        let w_star = instance(3, 2, 2);
        for obs in MaxSelection::generate(&w_star, 10, &mut rng).unwrap() {
            let r = fd_gradient_check(
                "max",
                |w| MaxSelection::nll(w, &obs),
                |w| MaxSelection::exact_gradient(w, &obs),
                w_star.as_matrix(),
                1e-5,
                1e-4,
            );
            assert!(r.pass, "{r:?}");
        }
        for obs in SecondPrice::generate(&w_star, 10, &mut rng).unwrap() {
            let r = fd_gradient_check(
                "sp",
                |w| SecondPrice::nll(w, &obs),
                |w| SecondPrice::exact_gradient(w, &obs),
                w_star.as_matrix(),
                1e-5,
                1e-4,
            );
            assert!(r.pass, "{r:?}");
        }
    }

    #[test]
    fn single_regressor_hessian_is_covariate_second_moment() {
        let w_star = RegressorMatrix::new(DMatrix::from_column_slice(3, 1, &[0.5, 0.2, -0.1])).unwrap();
        let eig = hessian_min_eig_estimate::<MaxSelection>(
            w_star.as_matrix(),
            &w_star,
            10_000,
            &mut SimRng::new(3),
        )
        .unwrap();
        assert!((eig - 1.0).abs() < 0.05, "{eig}");
    }

    #[test]
    fn hessian_refuses_large_problems() {
        let w = RegressorMatrix::new(DMatrix::zeros(33, 2)).unwrap();
        assert_eq!(
            hessian_min_eig_estimate::<MaxSelection>(w.as_matrix(), &w, 10, &mut SimRng::new(0)),
            Err(DiagnosticError::TooLarge(66))
        );
    }

    #[test]
    fn hessian_is_symmetric() {
        let w_star = instance(3, 2, 4);
        let data = MaxSelection::generate(&w_star, 200, &mut SimRng::new(5)).unwrap();
        let h = average_hessian::<MaxSelection>(w_star.as_matrix(), &data).unwrap();
        assert!((&h - h.transpose()).amax() < 1e-12);
    }

    #[test]
    fn growth_is_zero_at_zero_radius() {
        let w_star = instance(3, 2, 6);
        let rows =
            growth_probe::<MaxSelection>(&w_star, &[0.0, 0.1], 500, 2, &mut SimRng::new(7)).unwrap();
        for r in rows.iter().filter(|r| r.radius == 0.0) {
            assert_eq!(r.gap, 0.0);
            assert_eq!(r.se, 0.0);
        }
    }

    #[test]
    fn stationarity_is_reproducible() {
        let w_star = instance(2, 2, 8);
        let a = stationarity_test::<SecondPrice>(&w_star, 2000, &mut SimRng::new(9)).unwrap();
        let b = stationarity_test::<SecondPrice>(&w_star, 2000, &mut SimRng::new(9)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.seed, Some(9));
    }
}
