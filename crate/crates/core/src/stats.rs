//! Scalar standard-normal and unit-variance truncated-normal primitives.
//!
//! Every routine here works on `N(mu, 1)`. Ratios of the form `phi/Phi` are
//! evaluated in log space, with a continued fraction for the Mills ratio once
//! the argument is past `-30`, so tail probabilities far below `f64::MIN_POSITIVE`
//! still produce finite, accurate results.

use rand::Rng;
use rand_distr::StandardNormal;
use statrs::function::erf::erfc;
use std::f64::consts::{FRAC_1_SQRT_2, PI};

use crate::error::StatsError;

/// `ln(sqrt(2*pi))`
pub const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Per-draw total-variation budget for the clipped inverse-transform window.
pub const DEFAULT_TAIL_TV: f64 = 1e-9;

const REJECTION_CAP: usize = 1024;
const TAIL_SWITCH: f64 = -30.0;

pub fn std_pdf(z: f64) -> f64 {
    (-0.5 * z * z - LN_SQRT_2PI).exp()
}

pub fn ln_pdf(z: f64) -> f64 {
    -0.5 * z * z - LN_SQRT_2PI
}

pub fn std_cdf(z: f64) -> f64 {
    0.5 * erfc(-z * FRAC_1_SQRT_2)
}

/// Upper tail `1 - Phi(z)`, accurate for large positive `z`.
pub fn std_sf(z: f64) -> f64 {
    std_cdf(-z)
}

/// Mills ratio `(1 - Phi(x)) / phi(x)` for `x >= 0` by backward evaluation of
/// the Laplace continued fraction.
fn mills_ratio_cf(x: f64) -> f64 {
    let mut t = x;
    for n in (1..=80).rev() {
        t = x + n as f64 / t;
    }
    1.0 / t
}

/// `ln Phi(z)`, finite for every finite `z`.
pub fn ln_cdf(z: f64) -> f64 {
    if z == f64::NEG_INFINITY {
        f64::NEG_INFINITY
    } else if z < TAIL_SWITCH {
        ln_pdf(z) + mills_ratio_cf(-z).ln()
    } else if z > 0.0 {
        (-std_sf(z)).ln_1p()
    } else {
        std_cdf(z).ln()
    }
}

/// Inverse Mills ratio `phi(z) / Phi(z)`.
///
/// Behaves like `-z` as `z -> -inf` and vanishes as `z -> +inf`.
pub fn inv_mills(z: f64) -> f64 {
    if z == f64::INFINITY {
        0.0
    } else if z < TAIL_SWITCH {
        1.0 / mills_ratio_cf(-z)
    } else {
        std_pdf(z) / std_cdf(z)
    }
}

const ACKLAM_A: [f64; 6] = [
    -3.969_683_028_665_376e1,
    2.209_460_984_245_205e2,
    -2.759_285_104_469_687e2,
    1.383_577_518_672_69e2,
    -3.066_479_806_614_716e1,
    2.506_628_277_459_239,
];
const ACKLAM_B: [f64; 5] = [
    -5.447_609_879_822_406e1,
    1.615_858_368_580_409e2,
    -1.556_989_798_598_866e2,
    6.680_131_188_771_972e1,
    -1.328_068_155_288_572e1,
];
const ACKLAM_C: [f64; 6] = [
    -7.784_894_002_430_293e-3,
    -3.223_964_580_411_365e-1,
    -2.400_758_277_161_838,
    -2.549_671_010_243_078,
    4.374_664_141_464_968,
    2.938_163_982_698_783,
];
const ACKLAM_D: [f64; 4] = [
    7.784_695_709_041_462e-3,
    3.224_671_290_700_398e-1,
    2.445_134_137_142_996,
    3.754_408_661_907_416,
];

fn acklam_lower(p: f64) -> f64 {
    const P_LOW: f64 = 0.02425;
    if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        let c = &ACKLAM_C;
        let d = &ACKLAM_D;
        (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5])
            / ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0)
    } else {
        let q = p - 0.5;
        let r = q * q;
        let a = &ACKLAM_A;
        let b = &ACKLAM_B;
        (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q
            / (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0)
    }
}

/// Standard normal quantile for `p` strictly inside `(0, 1)`.
pub fn std_quantile(p: f64) -> Result<f64, StatsError> {
    if !(p > 0.0 && p < 1.0) {
        return Err(StatsError::Domain(format!(
            "quantile probability {p} outside (0, 1)"
        )));
    }
    Ok(quantile_unchecked(p))
}

fn quantile_unchecked(p: f64) -> f64 {
    if p > 0.5 {
        // 1 - p is exact on [0.5, 1]
        return -quantile_unchecked(1.0 - p);
    }
    let x = acklam_lower(p);
    // one Halley correction
    let u = (std_cdf(x) - p) / std_pdf(x);
    x - u / (1.0 + 0.5 * x * u)
}

/// Quantile from a log-probability, usable far past the `f64` underflow of `p`.
pub fn std_quantile_ln(ln_p: f64) -> Result<f64, StatsError> {
    if !(ln_p < 0.0) {
        return Err(StatsError::Domain(format!(
            "log-probability {ln_p} must be negative"
        )));
    }
    if ln_p > -600.0 {
        return Ok(quantile_unchecked(ln_p.exp()));
    }
    // Newton on ln Phi, which is concave with slope phi/Phi.
    let t = -2.0 * ln_p;
    let mut x = -(t - (2.0 * PI * t).ln()).sqrt();
    for _ in 0..60 {
        let step = (ln_cdf(x) - ln_p) / inv_mills(x);
        x -= step;
        if step.abs() <= 1e-15 * x.abs() {
            break;
        }
    }
    Ok(x)
}

/// Truncation set for a scalar Gaussian; either end may be infinite.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TruncInterval {
    lower: f64,
    upper: f64,
}

impl TruncInterval {
    pub fn new(lower: f64, upper: f64) -> Result<Self, StatsError> {
        if lower.is_nan() || upper.is_nan() || lower >= upper {
            return Err(StatsError::InvalidInterval { lower, upper });
        }
        Ok(Self { lower, upper })
    }

    pub fn full() -> Self {
        Self {
            lower: f64::NEG_INFINITY,
            upper: f64::INFINITY,
        }
    }

    /// `(-inf, upper]`
    pub fn below(upper: f64) -> Self {
        Self {
            lower: f64::NEG_INFINITY,
            upper,
        }
    }

    /// `[lower, inf)`
    pub fn above(lower: f64) -> Self {
        Self {
            lower,
            upper: f64::INFINITY,
        }
    }

    pub fn lower(&self) -> f64 {
        self.lower
    }

    pub fn upper(&self) -> f64 {
        self.upper
    }

    pub fn contains(&self, z: f64) -> bool {
        self.lower <= z && z <= self.upper
    }

    fn is_full(&self) -> bool {
        self.lower == f64::NEG_INFINITY && self.upper == f64::INFINITY
    }

    fn standardize(&self, mu: f64) -> (f64, f64) {
        (self.lower - mu, self.upper - mu)
    }
}

/// Standardized interval oriented so that most of its mass sits on the left,
/// i.e. `a + b <= 0`. The flag records whether it was mirrored.
fn orient(a: f64, b: f64) -> (f64, f64, bool) {
    if a == f64::NEG_INFINITY || (b != f64::INFINITY && a + b <= 0.0) {
        (a, b, false)
    } else {
        (-b, -a, true)
    }
}

/// `ln(Phi(b) - Phi(a))` for a left-oriented interval.
fn ln_mass_left(a: f64, b: f64) -> f64 {
    let ln_b = ln_cdf(b);
    let ln_a = ln_cdf(a);
    ln_b + (-(ln_a - ln_b).exp_m1()).ln()
}

/// `P(mu + Z in interval)` for `Z ~ N(0, 1)`.
pub fn interval_mass(mu: f64, interval: &TruncInterval) -> f64 {
    if interval.is_full() {
        return 1.0;
    }
    let (a, b) = interval.standardize(mu);
    let (a, b, _) = orient(a, b);
    ln_mass_left(a, b).exp()
}

/// Draw from `N(mu, 1)` conditioned on `interval` with the default tail budget.
pub fn sample_truncnorm<R: Rng + ?Sized>(mu: f64, interval: &TruncInterval, rng: &mut R) -> f64 {
    sample_truncnorm_tv(mu, interval, DEFAULT_TAIL_TV, rng)
}

/// As [`sample_truncnorm`] with an explicit per-draw clipping budget `tail_tv`.
///
/// Intervals holding at least half the mass are sampled by rejection; all others
/// by inverse transform over a window `[b - w, b]` at the heavy end, with
/// `w = max(8, 4 sqrt(2 ln(1/tail_tv)) + |b|)` in standardized units.
pub fn sample_truncnorm_tv<R: Rng + ?Sized>(
    mu: f64,
    interval: &TruncInterval,
    tail_tv: f64,
    rng: &mut R,
) -> f64 {
    if interval.is_full() {
        let z: f64 = rng.sample(StandardNormal);
        return mu + z;
    }
    let (a, b) = interval.standardize(mu);
    let (la, lb, mirrored) = orient(a, b);
    let ln_mass = ln_mass_left(la, lb);
    if ln_mass >= 0.5f64.ln() {
        for _ in 0..REJECTION_CAP {
            let z: f64 = rng.sample(StandardNormal);
            if a <= z && z <= b {
                return mu + z;
            }
        }
    }
    let z = inverse_transform_left(la, lb, tail_tv, rng);
    let z = if mirrored { -z } else { z };
    mu + z.clamp(a, b)
}

fn inverse_transform_left<R: Rng + ?Sized>(a: f64, b: f64, tail_tv: f64, rng: &mut R) -> f64 {
    let lo = if b < 0.0 {
        let tv = tail_tv.clamp(f64::MIN_POSITIVE, 0.5);
        let width = 8f64.max(4.0 * (2.0 * (1.0 / tv).ln()).sqrt() + b.abs());
        a.max(b - width)
    } else {
        a
    };
    let ln_hi = ln_cdf(b);
    let ratio = (ln_cdf(lo) - ln_hi).exp();
    // u in (0, 1]
    let u: f64 = 1.0 - rng.random::<f64>();
    let ln_p = ln_hi + (u + (1.0 - u) * ratio).ln();
    if ln_p >= 0.0 {
        return b;
    }
    match std_quantile_ln(ln_p) {
        Ok(z) => z,
        Err(_) => b,
    }
}

/// Mean of `N(mu, 1)` conditioned on `interval`.
pub fn truncnorm_mean(mu: f64, interval: &TruncInterval) -> f64 {
    if interval.is_full() {
        return mu;
    }
    let (a, b) = interval.standardize(mu);
    let (a, b, mirrored) = orient(a, b);
    let m = std_mean_left(a, b);
    if mirrored {
        mu - m
    } else {
        mu + m
    }
}

fn std_mean_left(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return -inv_mills(b);
    }
    let num = (ln_pdf(a) - ln_pdf(b)).exp_m1();
    let den = -(ln_cdf(a) - ln_cdf(b)).exp_m1();
    inv_mills(b) * num / den
}

/// Variance of `N(mu, 1)` conditioned on `interval`; lies in `(0, 1]`.
pub fn truncnorm_var(mu: f64, interval: &TruncInterval) -> f64 {
    if interval.is_full() {
        return 1.0;
    }
    let (a, b) = interval.standardize(mu);
    let (a, b, _) = orient(a, b);
    let mean = std_mean_left(a, b);
    let lam = inv_mills(b);
    let tilt = if a == f64::NEG_INFINITY {
        -b * lam
    } else {
        let den = -(ln_cdf(a) - ln_cdf(b)).exp_m1();
        lam * (a * (ln_pdf(a) - ln_pdf(b)).exp() - b) / den
    };
    (1.0 + tilt - mean * mean).clamp(0.0, 1.0)
}

/// `E[z^2 | z <= b]` for `z ~ N(mu, 1)`.
pub fn truncnorm_m2(mu: f64, b: f64) -> f64 {
    if b == f64::INFINITY {
        return mu * mu + 1.0;
    }
    let lam = inv_mills(b - mu);
    mu * mu + 1.0 - (mu + b) * lam
}

/// `E[z^4 | z <= b]` for `z ~ N(mu, 1)`.
pub fn truncnorm_m4(mu: f64, b: f64) -> f64 {
    let mu2 = mu * mu;
    let base = mu2 * mu2 + 6.0 * mu2 + 3.0;
    if b == f64::INFINITY {
        return base;
    }
    let lam = inv_mills(b - mu);
    let poly = b * b * b + b * b * mu + b * mu2 + 3.0 * b + 5.0 * mu + mu2 * mu;
    base - poly * lam
}
