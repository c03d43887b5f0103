use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::set::{BoxSet, CoarseSet, Polytope};
use crate::error::CoarseError;

/// A partition of `R^d` into convex cells.
///
/// Grid cells are half-open, `[offset + i*w, offset + (i+1)*w)` per coordinate.
/// List partitions return the first listed cell containing the query point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Partition {
    Grid { width: f64, offset: Vec<f64> },
    BoxList { cells: Vec<BoxSet> },
    PolytopeList { cells: Vec<Polytope> },
}

impl Partition {
    pub fn grid(width: f64, offset: Vec<f64>) -> Result<Self, CoarseError> {
        if !(width > 0.0 && width.is_finite()) || offset.is_empty() {
            return Err(CoarseError::InvalidSet(format!(
                "grid needs a positive width and an offset, got width {width}"
            )));
        }
        Ok(Partition::Grid { width, offset })
    }

    /// The trivial partition `{R^d}`.
    pub fn whole_space(d: usize) -> Self {
        Partition::BoxList {
            cells: vec![BoxSet::whole_space(d)],
        }
    }

    /// `{(-inf, split), [split, inf)}` in one dimension.
    pub fn half_lines(split: f64) -> Self {
        Partition::BoxList {
            cells: vec![
                BoxSet::new(vec![f64::NEG_INFINITY], vec![split]).expect("valid half-line"),
                BoxSet::new(vec![split], vec![f64::INFINITY]).expect("valid half-line"),
            ],
        }
    }

    pub fn dim(&self) -> Option<usize> {
        match self {
            Partition::Grid { offset, .. } => Some(offset.len()),
            Partition::BoxList { cells } => cells.first().map(BoxSet::dim),
            Partition::PolytopeList { cells } => cells.first().map(Polytope::dim),
        }
    }

    /// The cell containing `x`.
    pub fn locate(&self, x: &DVector<f64>) -> Result<CoarseSet, CoarseError> {
        let xs = x.as_slice();
        match self {
            Partition::Grid { width, offset } => {
                if offset.len() != xs.len() {
                    return Err(CoarseError::Uncovered);
                }
                let mut lower = Vec::with_capacity(xs.len());
                let mut upper = Vec::with_capacity(xs.len());
                for (&v, &o) in xs.iter().zip(offset) {
                    if !v.is_finite() {
                        return Err(CoarseError::Uncovered);
                    }
                    let mut idx = ((v - o) / width).floor();
                    // rounding in (v - o) / w can land one cell off
                    if o + idx * width > v {
                        idx -= 1.0;
                    } else if o + (idx + 1.0) * width <= v {
                        idx += 1.0;
                    }
                    lower.push(o + idx * width);
                    upper.push(o + (idx + 1.0) * width);
                }
                Ok(CoarseSet::Box(BoxSet::new(lower, upper)?))
            }
            Partition::BoxList { cells } => cells
                .iter()
                .find(|c| c.contains_half_open(xs))
                .map(|c| CoarseSet::Box(c.clone()))
                .ok_or(CoarseError::Uncovered),
            Partition::PolytopeList { cells } => cells
                .iter()
                .find(|c| c.contains(xs, 0.0))
                .map(|c| CoarseSet::Polytope(c.clone()))
                .ok_or(CoarseError::Uncovered),
        }
    }
}
