//! Per-sample likelihoods, conditional moments, conditional samplers and
//! gradient oracles for the max-selection and second-price models.
//!
//! For latent means `mu = W^T x`, the observation pins the latent vector `z` to
//! a union of slabs: slab `i` fixes `z_i = y` and truncates the remaining
//! coordinates. Slab probabilities, moments and log-densities are all computed
//! from `ln phi` and `ln Phi`, so `k` in the tens and tails past eight standard
//! deviations stay finite.
//!
//! The per-sample negative log-likelihood used here is `-ln p(y | x; W)`, the
//! density of what is actually observed. It differs from the surface-integral
//! form only by a constant that does not depend on `W`, so both share the
//! gradient `x (W^T x - E[z | obs])^T`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::ModelError;
use crate::models::{
    gen_max_observations, gen_second_price_observations, MaxObservation, RegressorMatrix,
    SecondPriceObservation,
};
use crate::stats::{
    inv_mills, ln_cdf, ln_pdf, sample_truncnorm_tv, truncnorm_var, TruncInterval,
    DEFAULT_TAIL_TV,
};

/// Slab probabilities of the conditional law of `z` given an observation.
#[derive(Clone, Debug, PartialEq)]
pub struct ConditionalMixture {
    pub weights: Vec<f64>,
    pub mus: Vec<f64>,
}

/// Gradient estimate, `d x k`.
pub type GradientSample = DMatrix<f64>;

fn log_sum_exp(v: impl Iterator<Item = f64> + Clone) -> f64 {
    let m = v.clone().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.map(|a| (a - m).exp()).sum::<f64>().ln()
}

/// `ln(phi(y - mu) / Phi(y - mu))`, the slab log-weight once the common factor
/// `prod_j Phi(y - mu_j)` has been divided out.
fn slab_log_weight(mu: f64, y: f64) -> f64 {
    ln_pdf(y - mu) - ln_cdf(y - mu)
}

fn normalized(logw: Vec<f64>) -> Vec<f64> {
    let lse = log_sum_exp(logw.iter().copied());
    logw.into_iter().map(|l| (l - lse).exp()).collect()
}

fn pick<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &w) in weights.iter().enumerate() {
        if w > 0.0 {
            acc += w;
            last = i;
            if u < acc {
                return i;
            }
        }
    }
    last
}

/// Mean of `N(mu, 1)` conditioned on `z <= y`.
fn below_mean(mu: f64, y: f64) -> f64 {
    mu - inv_mills(y - mu)
}

/// Mean of `N(mu, 1)` conditioned on `z >= y`.
fn above_mean(mu: f64, y: f64) -> f64 {
    mu + inv_mills(mu - y)
}

// ---------------------------------------------------------------------------
// max-selection model

/// `weight_i ∝ phi(y - mu_i) prod_{j != i} Phi(y - mu_j)`.
pub fn max_mixture_weights(mu: &[f64], y_max: f64) -> ConditionalMixture {
    let logw = mu.iter().map(|&m| slab_log_weight(m, y_max)).collect();
    ConditionalMixture {
        weights: normalized(logw),
        mus: mu.to_vec(),
    }
}

/// Draw `z ~ N(mu, I)` conditioned on `max_j z_j = y_max`.
pub fn sample_conditional_max<R: Rng + ?Sized>(mu: &[f64], y_max: f64, rng: &mut R) -> Vec<f64> {
    sample_conditional_max_tv(mu, y_max, DEFAULT_TAIL_TV, rng)
}

pub fn sample_conditional_max_tv<R: Rng + ?Sized>(
    mu: &[f64],
    y_max: f64,
    tail_tv: f64,
    rng: &mut R,
) -> Vec<f64> {
    let mix = max_mixture_weights(mu, y_max);
    let pinned = pick(&mix.weights, rng);
    let below = TruncInterval::below(y_max);
    mu.iter()
        .enumerate()
        .map(|(j, &m)| {
            if j == pinned {
                y_max
            } else {
                sample_truncnorm_tv(m, &below, tail_tv, rng)
            }
        })
        .collect()
}

pub fn exact_conditional_mean_max(mu: &[f64], y_max: f64) -> Vec<f64> {
    let mix = max_mixture_weights(mu, y_max);
    mu.iter()
        .zip(&mix.weights)
        .map(|(&m, &w)| w * y_max + (1.0 - w) * below_mean(m, y_max))
        .collect()
}

/// Covariance of the slab mixture, by the law of total variance over slabs.
fn slab_mixture_cov(
    weights: &[f64],
    y: f64,
    free_mean: &[f64],
    free_var: &[f64],
    skip: Option<usize>,
) -> DMatrix<f64> {
    let k = free_mean.len();
    let mut second = DMatrix::zeros(k, k);
    let mut mean = DVector::zeros(k);
    let mut slab = DVector::zeros(k);
    for (i, &wi) in weights.iter().enumerate() {
        if wi == 0.0 {
            continue;
        }
        for j in 0..k {
            slab[j] = if j == i { y } else { free_mean[j] };
        }
        second.ger(wi, &slab, &slab, 1.0);
        for j in 0..k {
            if j != i {
                second[(j, j)] += wi * free_var[j];
            }
        }
        mean.axpy(wi, &slab, 1.0);
    }
    if let Some(s) = skip {
        // the skipped coordinate is handled by the caller
        mean[s] = 0.0;
        for j in 0..k {
            second[(s, j)] = 0.0;
            second[(j, s)] = 0.0;
        }
    }
    second.ger(-1.0, &mean, &mean, 1.0);
    second
}

/// `Cov[z | max_j z_j = y_max]`.
pub fn conditional_cov_max(mu: &[f64], y_max: f64) -> DMatrix<f64> {
    let mix = max_mixture_weights(mu, y_max);
    let below = TruncInterval::below(y_max);
    let free_mean: Vec<f64> = mu.iter().map(|&m| below_mean(m, y_max)).collect();
    let free_var: Vec<f64> = mu.iter().map(|&m| truncnorm_var(m, &below)).collect();
    slab_mixture_cov(&mix.weights, y_max, &free_mean, &free_var, None)
}

/// Log-density of `max_i (mu_i + xi_i)` at `y`.
pub fn max_log_density(mu: &[f64], y: f64) -> f64 {
    let common: f64 = mu.iter().map(|&m| ln_cdf(y - m)).sum();
    common + log_sum_exp(mu.iter().map(|&m| slab_log_weight(m, y)))
}

pub fn stochastic_gradient_max<R: Rng + ?Sized>(
    w: &DMatrix<f64>,
    obs: &MaxObservation,
    rng: &mut R,
) -> GradientSample {
    MaxSelection::stochastic_gradient(w, obs, DEFAULT_TAIL_TV, rng)
}

pub fn exact_gradient_max(w: &DMatrix<f64>, obs: &MaxObservation) -> DMatrix<f64> {
    MaxSelection::exact_gradient(w, obs)
}

// ---------------------------------------------------------------------------
// second-price model

/// Weights over the runner-up index; the winner's entry is zero.
///
/// `weight_j ∝ phi(y - mu_j) prod_{l != j, winner} Phi(y - mu_l)` for `j != winner`.
pub fn second_price_mixture_weights(mu: &[f64], winner: usize, y_smax: f64) -> ConditionalMixture {
    let logw = mu
        .iter()
        .enumerate()
        .map(|(j, &m)| {
            if j == winner {
                f64::NEG_INFINITY
            } else {
                slab_log_weight(m, y_smax)
            }
        })
        .collect();
    ConditionalMixture {
        weights: normalized(logw),
        mus: mu.to_vec(),
    }
}

pub fn sample_conditional_second_price<R: Rng + ?Sized>(
    mu: &[f64],
    winner: usize,
    y_smax: f64,
    rng: &mut R,
) -> Vec<f64> {
    sample_conditional_second_price_tv(mu, winner, y_smax, DEFAULT_TAIL_TV, rng)
}

pub fn sample_conditional_second_price_tv<R: Rng + ?Sized>(
    mu: &[f64],
    winner: usize,
    y_smax: f64,
    tail_tv: f64,
    rng: &mut R,
) -> Vec<f64> {
    let mix = second_price_mixture_weights(mu, winner, y_smax);
    let runner_up = pick(&mix.weights, rng);
    let below = TruncInterval::below(y_smax);
    let above = TruncInterval::above(y_smax);
    mu.iter()
        .enumerate()
        .map(|(j, &m)| {
            if j == runner_up {
                y_smax
            } else if j == winner {
                sample_truncnorm_tv(m, &above, tail_tv, rng)
            } else {
                sample_truncnorm_tv(m, &below, tail_tv, rng)
            }
        })
        .collect()
}

pub fn exact_conditional_mean_second_price(mu: &[f64], winner: usize, y_smax: f64) -> Vec<f64> {
    let mix = second_price_mixture_weights(mu, winner, y_smax);
    mu.iter()
        .zip(&mix.weights)
        .enumerate()
        .map(|(j, (&m, &w))| {
            if j == winner {
                above_mean(m, y_smax)
            } else {
                w * y_smax + (1.0 - w) * below_mean(m, y_smax)
            }
        })
        .collect()
}

pub fn conditional_cov_second_price(mu: &[f64], winner: usize, y_smax: f64) -> DMatrix<f64> {
    let mix = second_price_mixture_weights(mu, winner, y_smax);
    let below = TruncInterval::below(y_smax);
    let free_mean: Vec<f64> = mu.iter().map(|&m| below_mean(m, y_smax)).collect();
    let free_var: Vec<f64> = mu.iter().map(|&m| truncnorm_var(m, &below)).collect();
    let mut cov = slab_mixture_cov(&mix.weights, y_smax, &free_mean, &free_var, Some(winner));
    // the winner is independent of the rest given the observation
    cov[(winner, winner)] = truncnorm_var(mu[winner], &TruncInterval::above(y_smax));
    cov
}

/// Log-density of observing `(winner, y)`:
/// `sum_{j != winner} phi(y - mu_j) (1 - Phi(y - mu_winner)) prod_{l != j, winner} Phi(y - mu_l)`.
pub fn second_price_log_density(mu: &[f64], winner: usize, y: f64) -> f64 {
    let top = ln_cdf(mu[winner] - y);
    let common: f64 = mu
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != winner)
        .map(|(_, &m)| ln_cdf(y - m))
        .sum();
    let slabs = log_sum_exp(
        mu.iter()
            .enumerate()
            .filter(|&(j, _)| j != winner)
            .map(|(_, &m)| slab_log_weight(m, y)),
    );
    top + common + slabs
}

pub fn stochastic_gradient_second_price<R: Rng + ?Sized>(
    w: &DMatrix<f64>,
    obs: &SecondPriceObservation,
    rng: &mut R,
) -> GradientSample {
    SecondPrice::stochastic_gradient(w, obs, DEFAULT_TAIL_TV, rng)
}

pub fn exact_gradient_second_price(w: &DMatrix<f64>, obs: &SecondPriceObservation) -> DMatrix<f64> {
    SecondPrice::exact_gradient(w, obs)
}

// ---------------------------------------------------------------------------
// shared interface

/// A self-selection observation model, seen through the latent means `mu = W^T x`.
pub trait SelectionModel: Send + Sync + 'static {
    type Obs: Clone + Send + Sync;

    /// Tag used in dataset headers and reports.
    const NAME: &'static str;

    fn covariates(obs: &Self::Obs) -> &DVector<f64>;

    fn log_density(mu: &[f64], obs: &Self::Obs) -> f64;

    fn conditional_mean(mu: &[f64], obs: &Self::Obs) -> Vec<f64>;

    fn conditional_cov(mu: &[f64], obs: &Self::Obs) -> DMatrix<f64>;

    fn sample_conditional<R: Rng + ?Sized>(
        mu: &[f64],
        obs: &Self::Obs,
        tail_tv: f64,
        rng: &mut R,
    ) -> Vec<f64>;

    fn generate<R: Rng + ?Sized>(
        w_star: &RegressorMatrix,
        n: usize,
        rng: &mut R,
    ) -> Result<Vec<Self::Obs>, ModelError>;

    fn latent_means(w: &DMatrix<f64>, obs: &Self::Obs) -> Vec<f64> {
        w.tr_mul(Self::covariates(obs)).as_slice().to_vec()
    }

    /// `-ln p(obs | W)`.
    fn nll(w: &DMatrix<f64>, obs: &Self::Obs) -> f64 {
        -Self::log_density(&Self::latent_means(w, obs), obs)
    }

    /// `x (W^T x - E[z | obs])^T`.
    fn exact_gradient(w: &DMatrix<f64>, obs: &Self::Obs) -> DMatrix<f64> {
        let mu = Self::latent_means(w, obs);
        let ez = Self::conditional_mean(&mu, obs);
        outer_residual(Self::covariates(obs), &mu, &ez)
    }

    /// `x (W^T x - z)^T` with `z` drawn from the conditional law; unbiased for
    /// the exact gradient.
    fn stochastic_gradient<R: Rng + ?Sized>(
        w: &DMatrix<f64>,
        obs: &Self::Obs,
        tail_tv: f64,
        rng: &mut R,
    ) -> DMatrix<f64> {
        let mu = Self::latent_means(w, obs);
        let z = Self::sample_conditional(&mu, obs, tail_tv, rng);
        outer_residual(Self::covariates(obs), &mu, &z)
    }
}

fn outer_residual(x: &DVector<f64>, mu: &[f64], z: &[f64]) -> DMatrix<f64> {
    DMatrix::from_fn(x.len(), mu.len(), |r, c| x[r] * (mu[c] - z[c]))
}

/// Observe `(x, max_i y_i)`.
#[derive(Clone, Copy, Debug, Default)]
pub struct MaxSelection;

/// Observe `(x, argmax_i y_i, second-largest y)`.
#[derive(Clone, Copy, Debug, Default)]
pub struct SecondPrice;

impl SelectionModel for MaxSelection {
    type Obs = MaxObservation;
    const NAME: &'static str = "max";

    fn covariates(obs: &MaxObservation) -> &DVector<f64> {
        &obs.x
    }

    fn log_density(mu: &[f64], obs: &MaxObservation) -> f64 {
        max_log_density(mu, obs.y_max)
    }

    fn conditional_mean(mu: &[f64], obs: &MaxObservation) -> Vec<f64> {
        exact_conditional_mean_max(mu, obs.y_max)
    }

    fn conditional_cov(mu: &[f64], obs: &MaxObservation) -> DMatrix<f64> {
        conditional_cov_max(mu, obs.y_max)
    }

    fn sample_conditional<R: Rng + ?Sized>(
        mu: &[f64],
        obs: &MaxObservation,
        tail_tv: f64,
        rng: &mut R,
    ) -> Vec<f64> {
        sample_conditional_max_tv(mu, obs.y_max, tail_tv, rng)
    }

    fn generate<R: Rng + ?Sized>(
        w_star: &RegressorMatrix,
        n: usize,
        rng: &mut R,
    ) -> Result<Vec<MaxObservation>, ModelError> {
        Ok(gen_max_observations(w_star, n, rng))
    }
}

impl SelectionModel for SecondPrice {
    type Obs = SecondPriceObservation;
    const NAME: &'static str = "second-price";

    fn covariates(obs: &SecondPriceObservation) -> &DVector<f64> {
        &obs.x
    }

    fn log_density(mu: &[f64], obs: &SecondPriceObservation) -> f64 {
        second_price_log_density(mu, obs.winner, obs.y_smax)
    }

    fn conditional_mean(mu: &[f64], obs: &SecondPriceObservation) -> Vec<f64> {
        exact_conditional_mean_second_price(mu, obs.winner, obs.y_smax)
    }

    fn conditional_cov(mu: &[f64], obs: &SecondPriceObservation) -> DMatrix<f64> {
        conditional_cov_second_price(mu, obs.winner, obs.y_smax)
    }

    fn sample_conditional<R: Rng + ?Sized>(
        mu: &[f64],
        obs: &SecondPriceObservation,
        tail_tv: f64,
        rng: &mut R,
    ) -> Vec<f64> {
        sample_conditional_second_price_tv(mu, obs.winner, obs.y_smax, tail_tv, rng)
    }

    fn generate<R: Rng + ?Sized>(
        w_star: &RegressorMatrix,
        n: usize,
        rng: &mut R,
    ) -> Result<Vec<SecondPriceObservation>, ModelError> {
        gen_second_price_observations(w_star, n, rng)
    }
}
