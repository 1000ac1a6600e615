use rayon::prelude::*;
use serde::Serialize;

use crate::asymptotics::chi;
use crate::dynamics::GrowthEvaluator;
use crate::error::{Error, Result};
use crate::model::{ModelParameters, PatchModel, ValidationStatus};

/// A sampled parameter axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Axis {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
    pub log: bool,
}

impl Axis {
    pub const DEFAULT_M: Axis = Axis::log(1e-2, 1e2, 128);
    pub const DEFAULT_T: Axis = Axis::log(1e-2, 1e3, 128);

    pub const fn log(lo: f64, hi: f64, n: usize) -> Self {
        Self { lo, hi, n, log: true }
    }

    pub const fn linear(lo: f64, hi: f64, n: usize) -> Self {
        Self { lo, hi, n, log: false }
    }

    pub fn check(&self) -> Result<()> {
        if self.n < 2 || !(self.hi > self.lo) || !self.lo.is_finite() || !self.hi.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "axis needs n ≥ 2 and lo < hi, got {}:{}:{}",
                self.lo, self.hi, self.n
            )));
        }
        if self.log && !(self.lo > 0.0) {
            return Err(Error::InvalidParameter("log axis needs lo > 0".into()));
        }
        Ok(())
    }

    pub fn values(&self) -> Vec<f64> {
        let last = (self.n - 1) as f64;
        (0..self.n)
            .map(|k| {
                let s = k as f64 / last;
                if k == 0 {
                    self.lo
                } else if k + 1 == self.n {
                    self.hi
                } else if self.log {
                    (self.lo.ln() + s * (self.hi.ln() - self.lo.ln())).exp()
                } else {
                    self.lo + s * (self.hi - self.lo)
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CellStatus {
    Ok,
    NonPositiveMonodromy,
    Error(String),
}

impl CellStatus {
    pub fn label(&self) -> &str {
        match self {
            CellStatus::Ok => "ok",
            CellStatus::NonPositiveMonodromy => "non_positive_monodromy",
            CellStatus::Error(kind) => kind,
        }
    }

    pub fn is_ok(&self) -> bool {
        matches!(self, CellStatus::Ok)
    }
}

/// `Λ` on an `m × T` lattice; `lambda[i][j]` is at `(m_values[i], t_values[j])`
/// and is NaN where the status is not ok.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepGrid {
    pub m_values: Vec<f64>,
    pub t_values: Vec<f64>,
    pub lambda: Vec<Vec<f64>>,
    pub status: Vec<Vec<CellStatus>>,
    pub chi: f64,
    pub validation: ValidationStatus,
}

impl SweepGrid {
    pub fn max_lambda(&self) -> Option<(f64, usize, usize)> {
        let mut best: Option<(f64, usize, usize)> = None;
        for (i, row) in self.lambda.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                if self.status[i][j].is_ok() && best.is_none_or(|b| v > b.0) {
                    best = Some((v, i, j));
                }
            }
        }
        best
    }

    pub fn ok_cells(&self) -> usize {
        self.status.iter().flatten().filter(|s| s.is_ok()).count()
    }
}

pub(crate) fn evaluate_cell(ev: &GrowthEvaluator, m: f64, t: f64) -> (f64, CellStatus) {
    match ModelParameters::new(m, t).and_then(|p| ev.lambda(&p)) {
        Ok(v) => (v, CellStatus::Ok),
        Err(Error::NonPositiveMonodromy { .. }) => (f64::NAN, CellStatus::NonPositiveMonodromy),
        Err(e) => (f64::NAN, CellStatus::Error(e.kind().to_string())),
    }
}

/// `Λ` at every lattice point; per-cell failures are recorded, not fatal.
pub fn sweep_values(model: &PatchModel, m_values: &[f64], t_values: &[f64]) -> Result<SweepGrid> {
    let ev = GrowthEvaluator::new(model)?;
    let nt = t_values.len();
    let cells: Vec<(f64, CellStatus)> = (0..m_values.len() * nt)
        .into_par_iter()
        .map(|k| evaluate_cell(&ev, m_values[k / nt], t_values[k % nt]))
        .collect();
    let mut lambda = vec![vec![f64::NAN; nt]; m_values.len()];
    let mut status = vec![vec![CellStatus::Ok; nt]; m_values.len()];
    for (k, (v, s)) in cells.into_iter().enumerate() {
        lambda[k / nt][k % nt] = v;
        status[k / nt][k % nt] = s;
    }
    Ok(SweepGrid {
        m_values: m_values.to_vec(),
        t_values: t_values.to_vec(),
        lambda,
        status,
        chi: chi(model),
        validation: ev.status,
    })
}

pub fn sweep(model: &PatchModel, m_axis: Axis, t_axis: Axis) -> Result<SweepGrid> {
    m_axis.check()?;
    t_axis.check()?;
    sweep_values(model, &m_axis.values(), &t_axis.values())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::builtin;

    #[test]
    fn axis_endpoints() {
        let v = Axis::log(1e-2, 1e2, 5).values();
        assert_eq!(v.len(), 5);
        assert!((v[0] - 1e-2).abs() < 1e-18);
        assert!((v[2] - 1.0).abs() < 1e-14);
        assert_eq!(v[4], 1e2);
        assert!(Axis::log(0.0, 1.0, 3).check().is_err());
        assert!(Axis::linear(1.0, 1.0, 3).check().is_err());
    }

    #[test]
    fn sweep_bounded_by_chi_and_deterministic() {
        let model = builtin("pm1(0.5)").unwrap();
        let a = sweep(&model, Axis::log(0.01, 10.0, 12), Axis::log(0.1, 500.0, 12)).unwrap();
        let b = sweep(&model, Axis::log(0.01, 10.0, 12), Axis::log(0.1, 500.0, 12)).unwrap();
        assert_eq!(a.ok_cells(), 144);
        for row in &a.lambda {
            for v in row {
                assert!(*v <= 0.5 + 1e-9);
            }
        }
        let bits = |g: &SweepGrid| -> Vec<u64> { g.lambda.iter().flatten().map(|v| v.to_bits()).collect() };
        assert_eq!(bits(&a), bits(&b));
    }

    #[test]
    fn reducible_cells_marked() {
        let model = builtin("fainshil(0,0)").unwrap();
        let g = sweep(&model, Axis::log(0.5, 2.0, 3), Axis::log(1.0, 4.0, 3)).unwrap();
        assert!(g
            .status
            .iter()
            .flatten()
            .any(|s| *s == CellStatus::NonPositiveMonodromy));
    }
}
