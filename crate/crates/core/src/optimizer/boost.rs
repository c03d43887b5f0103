use nalgebra::DMatrix;

use super::assignment::permutation_distance;
use crate::error::OptimError;

#[derive(Clone, Debug, PartialEq)]
pub struct Boosted {
    pub index: usize,
    pub estimate: DMatrix<f64>,
    /// Candidates (including the chosen one) within the radius.
    pub support: usize,
}

/// First candidate within `radius` (up to column permutation) of at least
/// `ceil(m / 2)` of the `m` candidates, itself included.
pub fn cluster_boost(candidates: &[DMatrix<f64>], radius: f64) -> Result<Boosted, OptimError> {
    let m = candidates.len();
    let needed = m.div_ceil(2);
    if m == 0 {
        return Err(OptimError::NoMajorityCluster {
            radius,
            needed,
            total: m,
        });
    }
    let mut dist = vec![vec![0.0; m]; m];
    for i in 0..m {
        for j in (i + 1)..m {
            let d = permutation_distance(&candidates[i], &candidates[j])?.distance;
            dist[i][j] = d;
            dist[j][i] = d;
        }
    }
    for (i, row) in dist.iter().enumerate() {
        let support = row.iter().filter(|&&d| d <= radius).count();
        if support >= needed {
            return Ok(Boosted {
                index: i,
                estimate: candidates[i].clone(),
                support,
            });
        }
    }
    Err(OptimError::NoMajorityCluster {
        radius,
        needed,
        total: m,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SimRng;
    use rand::Rng;

    #[test]
    fn identical_candidates() {
        let c = DMatrix::from_element(2, 2, 1.5);
        let b = cluster_boost(&vec![c.clone(); 5], 1e-12).unwrap();
        assert_eq!(b.index, 0);
        assert_eq!(b.estimate, c);
        assert_eq!(b.support, 5);
    }

    #[test]
    fn majority_cluster_wins() {
        let mut rng = SimRng::new(4);
        let p = DMatrix::from_column_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]);
        let mut cands = Vec::new();
        for i in 0..10 {
            if i % 3 == 0 && i > 0 {
                cands.push(DMatrix::from_element(2, 2, 50.0 * i as f64));
            } else {
                let e = DMatrix::from_fn(2, 2, |_, _| rng.random_range(-1.0..1.0));
                cands.push(&p + e * (0.01 / 2.0));
            }
        }
        let b = cluster_boost(&cands, 0.02).unwrap();
        assert!((&b.estimate - &p).norm() <= 0.01);
    }

    #[test]
    fn split_clusters_fail() {
        let mut cands = vec![DMatrix::zeros(2, 1); 5];
        cands.extend(vec![DMatrix::from_element(2, 1, 100.0); 5]);
        // each cluster has exactly half, which meets ceil(10/2) = 5
        assert!(cluster_boost(&cands, 0.1).is_ok());
        cands.push(DMatrix::from_element(2, 1, -100.0));
        assert_eq!(
            cluster_boost(&cands, 0.1).unwrap_err(),
            OptimError::NoMajorityCluster {
                radius: 0.1,
                needed: 6,
                total: 11
            }
        );
    }

    #[test]
    fn permuted_copies_count_as_close() {
        let a = DMatrix::from_column_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let mut b = a.clone();
        b.swap_columns(0, 1);
        let c = DMatrix::from_element(2, 2, 40.0);
        let got = cluster_boost(&[c, a, b], 1e-9).unwrap();
        assert_eq!(got.index, 1);
    }
}
