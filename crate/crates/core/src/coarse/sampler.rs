use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;

use super::set::{to_vector, CoarseSet, Polytope};
use crate::error::CoarseError;
use crate::stats::{sample_truncnorm, TruncInterval};

/// Hit-and-run steps per dimension used by [`sample_truncated_gaussian_on_set`].
///
/// Heuristic: there is no mixing certificate at this length. It was checked
/// against rejection samplers for `d <= 3`.
pub const BURN_IN_PER_DIM: usize = 64;

/// One draw from `N(mu, I)` restricted to `set`.
pub fn sample_truncated_gaussian_on_set<R: Rng + ?Sized>(
    mu: &DVector<f64>,
    set: &CoarseSet,
    rng: &mut R,
) -> Result<DVector<f64>, CoarseError> {
    if set.dim() != mu.len() {
        return Err(CoarseError::InvalidSet(format!(
            "set has dimension {}, mean has {}",
            set.dim(),
            mu.len()
        )));
    }
    match set {
        CoarseSet::Singleton(p) => Ok(to_vector(p)),
        CoarseSet::Box(bx) => Ok(DVector::from_fn(mu.len(), |i, _| {
            let iv = TruncInterval::new(bx.lower()[i], bx.upper()[i])
                .expect("box sides are valid intervals");
            sample_truncnorm(mu[i], &iv, rng)
        })),
        CoarseSet::Polytope(p) => {
            let start = to_vector(p.interior());
            hit_and_run(mu, p, &start, BURN_IN_PER_DIM * mu.len(), rng)
        }
    }
}

/// Hit-and-run chain for `N(mu, I)` restricted to a polytope.
///
/// Each step draws a uniform direction `u`, finds the chord through the current
/// point along `u`, and moves to an exact one-dimensional truncated normal draw on
/// that chord.
#[derive(Clone, Debug)]
pub struct HitAndRun<'a> {
    mu: DVector<f64>,
    polytope: &'a Polytope,
    state: DVector<f64>,
}

impl<'a> HitAndRun<'a> {
    pub fn new(
        mu: &DVector<f64>,
        polytope: &'a Polytope,
        start: &DVector<f64>,
    ) -> Result<Self, CoarseError> {
        if start.len() != polytope.dim() || mu.len() != polytope.dim() {
            return Err(CoarseError::InvalidSet("dimension mismatch".into()));
        }
        if !polytope.contains(start.as_slice(), 1e-9) {
            return Err(CoarseError::InfeasibleStart);
        }
        Ok(Self {
            mu: mu.clone(),
            polytope,
            state: start.clone(),
        })
    }

    pub fn state(&self) -> &DVector<f64> {
        &self.state
    }

    pub fn step<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        let d = self.state.len();
        let mut u = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
        let norm = u.norm();
        if norm == 0.0 {
            return;
        }
        u /= norm;

        let (mut t_lo, mut t_hi) = (f64::NEG_INFINITY, f64::INFINITY);
        for (row, &bi) in self.polytope.rows().iter().zip(self.polytope.rhs()) {
            let ax: f64 = row.iter().zip(self.state.iter()).map(|(a, x)| a * x).sum();
            let au: f64 = row.iter().zip(u.iter()).map(|(a, x)| a * x).sum();
            let slack = (bi - ax).max(0.0);
            if au > 0.0 {
                t_hi = t_hi.min(slack / au);
            } else if au < 0.0 {
                t_lo = t_lo.max(slack / au);
            }
        }
        if !(t_lo < t_hi) {
            return;
        }
        // along the line the density is proportional to exp(-(t - <mu - x, u>)^2 / 2)
        let centre = (&self.mu - &self.state).dot(&u);
        let iv = TruncInterval::new(t_lo, t_hi).expect("chord is a proper interval");
        let t = sample_truncnorm(centre, &iv, rng);
        self.state.axpy(t, &u, 1.0);
    }
}

/// Run `burn_in` hit-and-run steps from `start` and return the final state.
pub fn hit_and_run<R: Rng + ?Sized>(
    mu: &DVector<f64>,
    polytope: &Polytope,
    start: &DVector<f64>,
    burn_in: usize,
    rng: &mut R,
) -> Result<DVector<f64>, CoarseError> {
    let mut chain = HitAndRun::new(mu, polytope, start)?;
    for _ in 0..burn_in {
        chain.step(rng);
    }
    Ok(chain.state)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coarse::set::BoxSet;
    use crate::rng::SimRng;
    use crate::stats::truncnorm_mean;

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(x)
    }

    #[test]
    fn singleton_returns_point() {
        let s = CoarseSet::Singleton(vec![1.0, 2.0]);
        let got = sample_truncated_gaussian_on_set(&v(&[0.0, 0.0]), &s, &mut SimRng::new(1));
        assert_eq!(got.unwrap(), v(&[1.0, 2.0]));
    }

    #[test]
    fn dimension_mismatch_errors() {
        let s = CoarseSet::Singleton(vec![1.0, 2.0]);
        assert!(sample_truncated_gaussian_on_set(&v(&[0.0]), &s, &mut SimRng::new(1)).is_err());
    }

    #[test]
    fn positive_orthant_means() {
        let d = 3;
        let set = CoarseSet::Box(BoxSet::new(vec![0.0; d], vec![f64::INFINITY; d]).unwrap());
        let mut rng = SimRng::new(2);
        let n = 100_000;
        let mut sum = vec![0.0; d];
        let mut sq = vec![0.0; d];
        for _ in 0..n {
            let y = sample_truncated_gaussian_on_set(&v(&[0.0; 3]), &set, &mut rng).unwrap();
            for i in 0..d {
                sum[i] += y[i];
                sq[i] += y[i] * y[i];
            }
        }
        let target = truncnorm_mean(0.0, &TruncInterval::above(0.0));
        assert!((target - 0.7979).abs() < 1e-4);
        for i in 0..d {
            let m = sum[i] / n as f64;
            let se = ((sq[i] / n as f64 - m * m) / n as f64).sqrt();
            assert!((m - target).abs() <= 3.0 * se, "coord {i}: {m}");
        }
    }

    #[test]
    fn infeasible_start_rejected() {
        let p = Polytope::new(vec![vec![1.0]], vec![1.0], vec![0.0]).unwrap();
        assert_eq!(
            HitAndRun::new(&v(&[0.0]), &p, &v(&[2.0])).unwrap_err(),
            CoarseError::InfeasibleStart
        );
    }

    #[test]
    fn iterates_stay_feasible() {
        let tri = Polytope::new(
            vec![vec![1.0, 1.0], vec![-1.0, 0.0], vec![0.0, -1.0]],
            vec![1.0, 0.0, 0.0],
            vec![0.2, 0.2],
        )
        .unwrap();
        let mut chain = HitAndRun::new(&v(&[3.0, -2.0]), &tri, &v(&[0.2, 0.2])).unwrap();
        let mut rng = SimRng::new(3);
        for _ in 0..20_000 {
            chain.step(&mut rng);
            assert!(tri.contains(chain.state().as_slice(), 1e-9));
        }
    }

    #[test]
    fn one_dimensional_chain_is_exact_after_one_step() {
        // the only chord is the whole interval, so one step is an exact draw
        let p = Polytope::from_box(&BoxSet::new(vec![-0.5], vec![2.0]).unwrap()).unwrap();
        let mu = v(&[1.5]);
        let mut rng = SimRng::new(4);
        let n = 100_000;
        let draws: Vec<f64> = (0..n)
            .map(|_| hit_and_run(&mu, &p, &v(&[0.0]), 1, &mut rng).unwrap()[0])
            .collect();
        let m = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n as f64;
        let want = truncnorm_mean(1.5, &TruncInterval::new(-0.5, 2.0).unwrap());
        assert!((m - want).abs() <= 4.0 * (var / n as f64).sqrt(), "{m} vs {want}");
    }

    #[test]
    fn triangle_first_moment_matches_rejection() {
        let tri = Polytope::new(
            vec![vec![1.0, 1.0], vec![-1.0, 0.0], vec![0.0, -1.0]],
            vec![1.0, 0.0, 0.0],
            vec![0.25, 0.25],
        )
        .unwrap();
        let mu = v(&[1.0 / 3.0, 1.0 / 3.0]);
        let mut rng = SimRng::new(5);
        let n = 20_000;

        let mut reject = Vec::with_capacity(n);
        while reject.len() < n {
            let z = v(&[
                mu[0] + rng.sample::<f64, _>(StandardNormal),
                mu[1] + rng.sample::<f64, _>(StandardNormal),
            ]);
            if tri.contains(z.as_slice(), 0.0) {
                reject.push(z);
            }
        }
        let hr: Vec<DVector<f64>> = (0..n)
            .map(|_| hit_and_run(&mu, &tri, &v(&[0.25, 0.25]), 200, &mut rng).unwrap())
            .collect();
        for i in 0..2 {
            let stats = |xs: &[DVector<f64>]| {
                let m = xs.iter().map(|x| x[i]).sum::<f64>() / n as f64;
                let var = xs.iter().map(|x| (x[i] - m).powi(2)).sum::<f64>() / n as f64;
                (m, var / n as f64)
            };
            let (m1, v1) = stats(&reject);
            let (m2, v2) = stats(&hr);
            assert!((m1 - m2).abs() <= 4.0 * (v1 + v2).sqrt(), "coord {i}: {m1} vs {m2}");
        }
    }
}
