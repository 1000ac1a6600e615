//! Numerical check of whether `T ↦ Λ(m, T)` is increasing. Evidence only.

use rayon::prelude::*;
use serde::Serialize;

use super::sweep::sweep_values;
use crate::error::Result;
use crate::model::PatchModel;

/// Decreases smaller than this are treated as rounding.
pub const MONOTONE_SLACK: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Shape {
    Increasing,
    Decreasing,
    IncreasingThenDecreasing,
    Other,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonotoneRow {
    pub m: f64,
    pub lambda: Vec<f64>,
    pub increasing: bool,
    pub shape: Shape,
    /// Ladder indices `k` where `Λ(T_{k+1}) < Λ(T_k)`.
    pub violations: Vec<usize>,
    /// Ladder points where `Λ` was undefined.
    pub undefined: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonotonicityReport {
    pub t_ladder: Vec<f64>,
    pub rows: Vec<MonotoneRow>,
    /// Violations are only unexpected when migration does not depend on time.
    pub constant_migration: bool,
    pub note: &'static str,
}

impl MonotonicityReport {
    pub fn all_increasing(&self) -> bool {
        self.rows.iter().all(|r| r.increasing)
    }
}

fn shape(values: &[f64]) -> (Shape, Vec<usize>) {
    let steps: Vec<i8> = values
        .windows(2)
        .map(|w| {
            let d = w[1] - w[0];
            if d < -MONOTONE_SLACK {
                -1
            } else if d > MONOTONE_SLACK {
                1
            } else {
                0
            }
        })
        .collect();
    let violations = steps
        .iter()
        .enumerate()
        .filter(|(_, &s)| s < 0)
        .map(|(k, _)| k)
        .collect::<Vec<_>>();
    let signs: Vec<i8> = steps.iter().copied().filter(|&s| s != 0).collect();
    let changes = signs.windows(2).filter(|w| w[0] != w[1]).count();
    let shape = match (signs.first(), changes) {
        (None, _) | (Some(1), 0) => Shape::Increasing,
        (Some(-1), 0) => Shape::Decreasing,
        (Some(1), 1) => Shape::IncreasingThenDecreasing,
        _ => Shape::Other,
    };
    (shape, violations)
}

pub fn monotonicity_scan(
    model: &PatchModel,
    m_list: &[f64],
    t_ladder: &[f64],
) -> Result<MonotonicityReport> {
    let grid = sweep_values(model, m_list, t_ladder)?;
    let rows = m_list
        .par_iter()
        .enumerate()
        .map(|(i, &m)| {
            let undefined: Vec<usize> = (0..t_ladder.len())
                .filter(|&j| !grid.status[i][j].is_ok())
                .collect();
            let defined: Vec<f64> = grid.lambda[i]
                .iter()
                .copied()
                .filter(|v| v.is_finite())
                .collect();
            let (shape, violations) = shape(&defined);
            MonotoneRow {
                m,
                lambda: grid.lambda[i].clone(),
                increasing: violations.is_empty(),
                shape,
                violations,
                undefined,
            }
        })
        .collect();
    Ok(MonotonicityReport {
        t_ladder: t_ladder.to_vec(),
        rows,
        constant_migration: model.has_constant_migration(),
        note: "numerical evidence on a finite ladder; not a proof",
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::builtin;
    use crate::explorer::Axis;

    #[test]
    fn shapes() {
        assert_eq!(shape(&[1.0, 2.0, 2.0, 3.0]).0, Shape::Increasing);
        assert_eq!(shape(&[3.0, 2.0]).0, Shape::Decreasing);
        assert_eq!(shape(&[1.0, 2.0, 0.0]), (Shape::IncreasingThenDecreasing, vec![1]));
        assert_eq!(shape(&[1.0, 0.0, 2.0]).0, Shape::Other);
    }

    #[test]
    fn ab1_increasing() {
        let ladder = Axis::log(0.05, 500.0, 30).values();
        let r = monotonicity_scan(&builtin("ab1").unwrap(), &[0.1, 0.3, 1.0, 3.0], &ladder).unwrap();
        assert!(r.all_increasing(), "{r:?}");
    }

    #[test]
    fn fainshil_rises_then_falls() {
        let ladder = Axis::log(0.01, 1000.0, 40).values();
        let r = monotonicity_scan(&builtin("fainshil").unwrap(), &[1.0], &ladder).unwrap();
        assert_eq!(r.rows[0].shape, Shape::IncreasingThenDecreasing);
    }
}
