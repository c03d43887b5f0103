use nalgebra::DMatrix;

use crate::error::OptimError;

const MOVE_TOL: f64 = 1e-10;
const MAX_SWEEPS: usize = 500;
/// Points violating no constraint by more than this are returned unchanged.
const FEAS_TOL: f64 = 1e-12;

/// Feasible region `{W : |W - center|_F <= radius, |w_i|_2 <= column_cap for all i}`,
/// optionally intersected with a per-stage trust ball.
#[derive(Clone, Debug, PartialEq)]
pub struct ProjectionSet {
    pub center: DMatrix<f64>,
    pub radius: f64,
    pub column_cap: f64,
    pub stage_ball: Option<(DMatrix<f64>, f64)>,
}

/// Outcome of a projection. `converged` is false when the sweep cap was hit.
#[derive(Clone, Debug, PartialEq)]
pub struct Projection {
    pub point: DMatrix<f64>,
    pub converged: bool,
    pub sweeps: usize,
}

fn project_ball(x: &DMatrix<f64>, center: &DMatrix<f64>, radius: f64) -> DMatrix<f64> {
    let diff = x - center;
    let n = diff.norm();
    if n <= radius {
        x.clone()
    } else {
        center + diff * (radius / n)
    }
}

fn project_columns(x: &DMatrix<f64>, cap: f64) -> DMatrix<f64> {
    let mut out = x.clone();
    for mut col in out.column_iter_mut() {
        let n = col.norm();
        if n > cap {
            col *= cap / n;
        }
    }
    out
}

impl ProjectionSet {
    pub fn new(center: DMatrix<f64>, radius: f64, column_cap: f64) -> Result<Self, OptimError> {
        if !(radius > 0.0) || !(column_cap > 0.0) {
            return Err(OptimError::Config(format!(
                "projection radii must be positive, got D = {radius}, C = {column_cap}"
            )));
        }
        Ok(Self {
            center,
            radius,
            column_cap,
            stage_ball: None,
        })
    }

    pub fn with_stage_ball(&self, center: DMatrix<f64>, radius: f64) -> Self {
        Self {
            stage_ball: Some((center, radius)),
            ..self.clone()
        }
    }

    fn check_shape(&self, w: &DMatrix<f64>) -> Result<(), OptimError> {
        if w.shape() != self.center.shape() {
            return Err(OptimError::Shape(format!(
                "expected {:?}, got {:?}",
                self.center.shape(),
                w.shape()
            )));
        }
        Ok(())
    }

    /// Smallest margin across all constraints; negative when infeasible.
    pub fn slack(&self, w: &DMatrix<f64>) -> f64 {
        let mut s = self.radius - (w - &self.center).norm();
        if self.column_cap.is_finite() {
            let widest = w.column_iter().map(|c| c.norm()).fold(0.0, f64::max);
            s = s.min(self.column_cap - widest);
        }
        if let Some((c, r)) = &self.stage_ball {
            s = s.min(r - (w - c).norm());
        }
        s
    }

    pub fn contains(&self, w: &DMatrix<f64>, tol: f64) -> bool {
        self.slack(w) >= -tol
    }

    fn project_onto(&self, set: usize, x: &DMatrix<f64>) -> DMatrix<f64> {
        match set {
            0 => project_ball(x, &self.center, self.radius),
            1 => project_columns(x, self.column_cap),
            _ => {
                let (c, r) = self.stage_ball.as_ref().expect("stage ball present");
                project_ball(x, c, *r)
            }
        }
    }

    /// Euclidean projection of `w` onto the intersection, by Dykstra's
    /// alternating projections.
    pub fn project(&self, w: &DMatrix<f64>) -> Result<Projection, OptimError> {
        self.check_shape(w)?;
        if self.contains(w, FEAS_TOL) {
            return Ok(Projection {
                point: w.clone(),
                converged: true,
                sweeps: 0,
            });
        }
        let sets = if self.stage_ball.is_some() { 3 } else { 2 };
        let mut x = w.clone();
        let mut incr: Vec<DMatrix<f64>> = vec![DMatrix::zeros(w.nrows(), w.ncols()); sets];
        for sweep in 1..=MAX_SWEEPS {
            let before = x.clone();
            for (i, p) in incr.iter_mut().enumerate() {
                let y = &x + &*p;
                let next = self.project_onto(i, &y);
                *p = y - &next;
                x = next;
            }
            if (&x - &before).norm() < MOVE_TOL {
                return Ok(Projection {
                    point: self.restore(x, sets),
                    converged: true,
                    sweeps: sweep,
                });
            }
        }
        Ok(Projection {
            point: self.restore(x, sets),
            converged: false,
            sweeps: MAX_SWEEPS,
        })
    }

    /// Plain alternating projections until every constraint holds to `FEAS_TOL`.
    fn restore(&self, mut x: DMatrix<f64>, sets: usize) -> DMatrix<f64> {
        for _ in 0..MAX_SWEEPS {
            if self.contains(&x, FEAS_TOL) {
                break;
            }
            for i in 0..sets {
                x = self.project_onto(i, &x);
            }
        }
        x
    }
}
