use nalgebra::DMatrix;

use crate::error::OptimError;

/// Column matching between two regressor matrices.
///
/// `perm[i]` is the column of the second matrix paired with column `i` of the first.
#[derive(Clone, Debug, PartialEq)]
pub struct Matching {
    pub distance: f64,
    pub perm: Vec<usize>,
}

/// Largest `k` solved by enumeration.
const BRUTE_FORCE_MAX: usize = 8;

fn cost_matrix(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let k = a.ncols();
    DMatrix::from_fn(k, k, |i, j| (a.column(i) - b.column(j)).norm_squared())
}

fn total(cost: &DMatrix<f64>, perm: &[usize]) -> f64 {
    perm.iter().enumerate().map(|(i, &j)| cost[(i, j)]).sum()
}

/// Minimum-cost assignment by enumerating all permutations (Heap's algorithm).
pub fn brute_force_assignment(cost: &DMatrix<f64>) -> Vec<usize> {
    let k = cost.nrows();
    let mut perm: Vec<usize> = (0..k).collect();
    let mut best = perm.clone();
    let mut best_cost = total(cost, &perm);
    let mut c = vec![0usize; k];
    let mut i = 0;
    while i < k {
        if c[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(c[i], i);
            }
            let t = total(cost, &perm);
            if t < best_cost {
                best_cost = t;
                best.clone_from(&perm);
            }
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    best
}

/// Minimum-cost assignment for a square cost matrix, O(k^3) shortest augmenting paths
/// with row and column potentials.
pub fn hungarian(cost: &DMatrix<f64>) -> Vec<usize> {
    let n = cost.nrows();
    // 1-based internally; column 0 is the virtual start
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut row_of = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        row_of[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = row_of[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[(i0 - 1, j - 1)] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[row_of[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if row_of[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            row_of[j0] = row_of[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut perm = vec![0; n];
    for j in 1..=n {
        perm[row_of[j] - 1] = j - 1;
    }
    perm
}

/// `min over permutations pi of sqrt(sum_i |a_i - b_pi(i)|^2)`.
pub fn permutation_distance(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<Matching, OptimError> {
    if a.shape() != b.shape() {
        return Err(OptimError::Shape(format!("{:?} vs {:?}", a.shape(), b.shape())));
    }
    let cost = cost_matrix(a, b);
    let perm = if a.ncols() <= BRUTE_FORCE_MAX {
        brute_force_assignment(&cost)
    } else {
        hungarian(&cost)
    };
    Ok(Matching {
        distance: total(&cost, &perm).max(0.0).sqrt(),
        perm,
    })
}
