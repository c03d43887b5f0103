use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::CoarseError;

/// Axis-aligned box `prod_i [lower_i, upper_i]`; infinite bounds allowed.
///
/// On the wire an infinite bound is written as `null`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BoxWire", into = "BoxWire")]
pub struct BoxSet {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct BoxWire {
    lower: Vec<Option<f64>>,
    upper: Vec<Option<f64>>,
}

impl TryFrom<BoxWire> for BoxSet {
    type Error = CoarseError;

    fn try_from(w: BoxWire) -> Result<Self, Self::Error> {
        BoxSet::new(
            w.lower
                .into_iter()
                .map(|v| v.unwrap_or(f64::NEG_INFINITY))
                .collect(),
            w.upper
                .into_iter()
                .map(|v| v.unwrap_or(f64::INFINITY))
                .collect(),
        )
    }
}

impl From<BoxSet> for BoxWire {
    fn from(b: BoxSet) -> Self {
        let wire = |v: Vec<f64>| {
            v.into_iter()
                .map(|x| if x.is_finite() { Some(x) } else { None })
                .collect()
        };
        BoxWire {
            lower: wire(b.lower),
            upper: wire(b.upper),
        }
    }
}

impl BoxSet {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self, CoarseError> {
        if lower.len() != upper.len() || lower.is_empty() {
            return Err(CoarseError::InvalidSet(format!(
                "box bounds have lengths {} and {}",
                lower.len(),
                upper.len()
            )));
        }
        if lower
            .iter()
            .zip(&upper)
            .any(|(l, u)| l.is_nan() || u.is_nan() || l >= u || *l == f64::INFINITY)
        {
            return Err(CoarseError::InvalidSet(
                "box needs lower < upper in every coordinate".into(),
            ));
        }
        Ok(Self { lower, upper })
    }

    pub fn whole_space(d: usize) -> Self {
        Self {
            lower: vec![f64::NEG_INFINITY; d],
            upper: vec![f64::INFINITY; d],
        }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    /// Closed containment.
    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(v, (l, u))| l <= v && v <= u)
    }

    /// Half-open containment `lower <= x < upper` used when locating cells.
    pub fn contains_half_open(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(v, (l, u))| l <= v && (v < u || *u == f64::INFINITY))
    }

    /// Deterministic member: the midpoint of finite sides, otherwise the point of
    /// the side nearest the origin.
    pub fn representative(&self) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(&l, &u)| {
                if l.is_finite() && u.is_finite() {
                    0.5 * (l + u)
                } else {
                    0f64.clamp(l, u)
                }
            })
            .collect()
    }
}

/// `{x : A x <= b}` with a certified strictly interior point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Polytope {
    a: Vec<Vec<f64>>,
    b: Vec<f64>,
    interior: Vec<f64>,
}

impl Polytope {
    pub fn new(a: Vec<Vec<f64>>, b: Vec<f64>, interior: Vec<f64>) -> Result<Self, CoarseError> {
        let d = interior.len();
        if d == 0 || a.len() != b.len() || a.iter().any(|row| row.len() != d) {
            return Err(CoarseError::InvalidSet("polytope shape mismatch".into()));
        }
        let p = Self { a, b, interior };
        if p.slacks(&p.interior).any(|s| !(s > 0.0)) {
            return Err(CoarseError::InvalidSet(
                "polytope interior point is not strictly feasible".into(),
            ));
        }
        Ok(p)
    }

    /// Polytope with the same feasible set as `bx`. Every side must be finite.
    pub fn from_box(bx: &BoxSet) -> Result<Self, CoarseError> {
        let d = bx.dim();
        let mut a = Vec::with_capacity(2 * d);
        let mut b = Vec::with_capacity(2 * d);
        for i in 0..d {
            let mut e = vec![0.0; d];
            e[i] = 1.0;
            a.push(e.clone());
            b.push(bx.upper[i]);
            e[i] = -1.0;
            a.push(e);
            b.push(-bx.lower[i]);
        }
        Self::new(a, b, bx.representative())
    }

    pub fn dim(&self) -> usize {
        self.interior.len()
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.a
    }

    pub fn rhs(&self) -> &[f64] {
        &self.b
    }

    pub fn interior(&self) -> &[f64] {
        &self.interior
    }

    /// `b_i - <a_i, x>` for every row.
    pub fn slacks<'a>(&'a self, x: &'a [f64]) -> impl Iterator<Item = f64> + 'a {
        self.a.iter().zip(&self.b).map(move |(row, bi)| bi - dot(row, x))
    }

    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        x.len() == self.dim() && self.slacks(x).all(|s| s >= -tol)
    }

    /// Intersection with `[-r, r]^d`, if it has a strictly interior point we can find.
    fn clip_to_cube(&self, r: f64) -> Option<Polytope> {
        let d = self.dim();
        let mut a = self.a.clone();
        let mut b = self.b.clone();
        for i in 0..d {
            let mut e = vec![0.0; d];
            e[i] = 1.0;
            a.push(e.clone());
            b.push(r);
            e[i] = -1.0;
            a.push(e);
            b.push(r);
        }
        let start = if self.interior.iter().all(|v| v.abs() < r) {
            self.interior.clone()
        } else {
            find_interior_point(&a, &b, &self.interior)?
        };
        Polytope::new(a, b, start).ok()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Cyclic projections onto the halfspaces shrunk by a small margin. Returns a
/// strictly feasible point of `A x <= b` or `None` if none is found.
fn find_interior_point(a: &[Vec<f64>], b: &[f64], start: &[f64]) -> Option<Vec<f64>> {
    let scale = b.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let margin = 1e-7 * scale;
    let mut x = start.to_vec();
    for _ in 0..20_000 {
        let mut worst = 0.0f64;
        for (row, &bi) in a.iter().zip(b) {
            let nrm2 = dot(row, row);
            let viol = dot(row, &x) - (bi - margin);
            if viol > 0.0 && nrm2 > 0.0 {
                let step = viol / nrm2;
                for (xi, ai) in x.iter_mut().zip(row) {
                    *xi -= step * ai;
                }
                worst = worst.max(viol);
            }
        }
        if worst == 0.0 {
            return a
                .iter()
                .zip(b)
                .all(|(row, &bi)| dot(row, &x) < bi)
                .then_some(x);
        }
    }
    None
}

/// Convex cell of a partition.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoarseSet {
    Box(BoxSet),
    Polytope(Polytope),
    Singleton(Vec<f64>),
}

impl CoarseSet {
    pub fn dim(&self) -> usize {
        match self {
            CoarseSet::Box(b) => b.dim(),
            CoarseSet::Polytope(p) => p.dim(),
            CoarseSet::Singleton(x) => x.len(),
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        match self {
            CoarseSet::Box(b) => b.contains(x),
            CoarseSet::Polytope(p) => p.contains(x, 1e-9),
            CoarseSet::Singleton(p) => p.as_slice() == x,
        }
    }

    /// Whether the set lies inside `[-r, r]^d`.
    pub fn within_cube(&self, r: f64) -> bool {
        match self {
            CoarseSet::Box(b) => b
                .lower()
                .iter()
                .zip(b.upper())
                .all(|(l, u)| *l >= -r && *u <= r),
            CoarseSet::Singleton(p) => p.iter().all(|v| v.abs() <= r),
            CoarseSet::Polytope(p) => {
                // membership of the cube rows is checked on the constraint list
                (0..p.dim()).all(|i| {
                    let bounded = |sign: f64| {
                        p.rows().iter().zip(p.rhs()).any(|(row, &bi)| {
                            row.iter().enumerate().all(|(j, &v)| {
                                if j == i {
                                    v == sign
                                } else {
                                    v == 0.0
                                }
                            }) && bi <= r
                        })
                    };
                    bounded(1.0) && bounded(-1.0)
                })
            }
        }
    }
}

/// Restrict `set` to the cube `[-r, r]^d`; cells that miss the cube collapse to
/// a deterministic member point.
pub fn localize(set: &CoarseSet, r: f64) -> CoarseSet {
    match set {
        CoarseSet::Singleton(_) => set.clone(),
        CoarseSet::Box(bx) => {
            let lower: Vec<f64> = bx.lower().iter().map(|l| l.max(-r)).collect();
            let upper: Vec<f64> = bx.upper().iter().map(|u| u.min(r)).collect();
            match BoxSet::new(lower, upper) {
                Ok(clipped) => CoarseSet::Box(clipped),
                Err(_) => CoarseSet::Singleton(bx.representative()),
            }
        }
        CoarseSet::Polytope(p) => match p.clip_to_cube(r) {
            Some(clipped) => CoarseSet::Polytope(clipped),
            None => CoarseSet::Singleton(p.interior().to_vec()),
        },
    }
}

pub(crate) fn to_vector(x: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    const INF: f64 = f64::INFINITY;

    #[test]
    fn localize_intersects() {
        let b = BoxSet::new(vec![0.0, -INF], vec![INF, 0.0]).unwrap();
        let got = localize(&CoarseSet::Box(b), 5.0);
        let want = BoxSet::new(vec![0.0, -5.0], vec![5.0, 0.0]).unwrap();
        assert_eq!(got, CoarseSet::Box(want));
    }

    #[test]
    fn localize_far_box_to_center() {
        let b = BoxSet::new(vec![10.0, 10.0], vec![11.0, 11.0]).unwrap();
        assert_eq!(
            localize(&CoarseSet::Box(b), 5.0),
            CoarseSet::Singleton(vec![10.5, 10.5])
        );
    }

    #[test]
    fn localize_far_unbounded_box_keeps_member() {
        let b = BoxSet::new(vec![10.0, -INF], vec![INF, INF]).unwrap();
        let got = localize(&CoarseSet::Box(b.clone()), 5.0);
        assert_eq!(got, CoarseSet::Singleton(vec![10.0, 0.0]));
        if let CoarseSet::Singleton(p) = got {
            assert!(b.contains(&p));
        }
    }

    #[test]
    fn localize_inside_is_identity() {
        let b = CoarseSet::Box(BoxSet::new(vec![-1.0, 0.0], vec![1.0, 2.0]).unwrap());
        assert_eq!(localize(&b, 5.0), b);
        let s = CoarseSet::Singleton(vec![100.0]);
        assert_eq!(localize(&s, 5.0), s);
    }

    #[test]
    fn localize_polytope() {
        // x + y <= 1, x >= 0, y >= 0
        let tri = Polytope::new(
            vec![vec![1.0, 1.0], vec![-1.0, 0.0], vec![0.0, -1.0]],
            vec![1.0, 0.0, 0.0],
            vec![0.2, 0.2],
        )
        .unwrap();
        let loc = localize(&CoarseSet::Polytope(tri.clone()), 5.0);
        match &loc {
            CoarseSet::Polytope(p) => {
                assert_eq!(p.interior(), tri.interior());
                assert!(loc.within_cube(5.0));
            }
            other => panic!("{other:?}"),
        }
        // half-plane x >= 10 misses the cube of radius 5
        let far = Polytope::new(vec![vec![-1.0, 0.0]], vec![-10.0], vec![11.0, 0.0]).unwrap();
        assert_eq!(
            localize(&CoarseSet::Polytope(far), 5.0),
            CoarseSet::Singleton(vec![11.0, 0.0])
        );
        // half-plane x >= 3 with interior point outside the cube still intersects it
        let near = Polytope::new(vec![vec![-1.0, 0.0]], vec![-3.0], vec![20.0, 0.0]).unwrap();
        match localize(&CoarseSet::Polytope(near), 5.0) {
            CoarseSet::Polytope(p) => {
                assert!(p.interior()[0] > 3.0 && p.interior()[0] < 5.0);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn polytope_requires_interior() {
        assert!(Polytope::new(vec![vec![1.0]], vec![0.0], vec![0.0]).is_err());
        assert!(Polytope::new(vec![vec![1.0]], vec![0.0], vec![-1.0]).is_ok());
    }

    #[test]
    fn box_wire_format() {
        let b = CoarseSet::Box(BoxSet::new(vec![0.0, -INF], vec![1.0, INF]).unwrap());
        let s = serde_json::to_string(&b).unwrap();
        assert_eq!(s, r#"{"box":{"lower":[0.0,null],"upper":[1.0,null]}}"#);
        let back: CoarseSet = serde_json::from_str(&s).unwrap();
        assert_eq!(back, b);
        assert!(serde_json::from_str::<CoarseSet>(r#"{"box":{"lower":[1.0],"upper":[0.0]}}"#)
            .is_err());
    }
}
