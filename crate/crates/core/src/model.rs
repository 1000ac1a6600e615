//! Periodic patch models `x' = (R(t/T) + m L(t/T)) x`.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::quadrature::UnitRule;
use crate::spectral::is_irreducible;

/// Column sums of a migration matrix must vanish to this tolerance.
pub const COLUMN_SUM_TOL: f64 = 1e-12;

/// Smooth pieces are sampled this close to their right end, never at it.
const LEFT_LIMIT_GAP: f64 = 1e-13;

/// Gauss-Legendre nodes per segment when integrating smooth schedules.
pub const SMOOTH_NODES: usize = 64;

pub type Sampler = Arc<dyn Fn(f64) -> DMatrix<f64> + Send + Sync>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum FunctionKind {
    PiecewiseConstant,
    PiecewiseSmooth,
}

/// A 1-periodic matrix-valued function of `τ ∈ [0, 1)`, right-continuous at
/// its breakpoints.
#[derive(Clone)]
pub enum PeriodicMatrixFunction {
    PiecewiseConstant {
        n: usize,
        segments: Vec<(f64, DMatrix<f64>)>,
    },
    PiecewiseSmooth {
        n: usize,
        breaks: Vec<f64>,
        sampler: Sampler,
    },
}

impl fmt::Debug for PeriodicMatrixFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::PiecewiseConstant { n, segments } => f
                .debug_struct("PiecewiseConstant")
                .field("n", n)
                .field("segments", segments)
                .finish(),
            Self::PiecewiseSmooth { n, breaks, .. } => f
                .debug_struct("PiecewiseSmooth")
                .field("n", n)
                .field("breaks", breaks)
                .finish_non_exhaustive(),
        }
    }
}

impl PartialEq for PeriodicMatrixFunction {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (
                Self::PiecewiseConstant { n: a, segments: s },
                Self::PiecewiseConstant { n: b, segments: t },
            ) => a == b && s == t,
            (
                Self::PiecewiseSmooth {
                    n: a,
                    breaks: s,
                    sampler: f,
                },
                Self::PiecewiseSmooth {
                    n: b,
                    breaks: t,
                    sampler: g,
                },
            ) => a == b && s == t && Arc::ptr_eq(f, g),
            _ => false,
        }
    }
}

fn check_breaks(breaks: &[f64]) -> Result<()> {
    if breaks.is_empty() {
        return Err(Error::Schema("at least one segment required".into()));
    }
    if breaks[0] != 0.0 {
        return Err(Error::Schema("first breakpoint must be 0".into()));
    }
    for w in breaks.windows(2) {
        if !(w[1] > w[0]) {
            return Err(Error::Schema("breakpoints must be strictly increasing".into()));
        }
    }
    if breaks.iter().any(|b| !(0.0..1.0).contains(b)) {
        return Err(Error::Schema("breakpoints must lie in [0, 1)".into()));
    }
    Ok(())
}

impl PeriodicMatrixFunction {
    pub fn piecewise_constant(segments: Vec<(f64, DMatrix<f64>)>) -> Result<Self> {
        let breaks: Vec<f64> = segments.iter().map(|s| s.0).collect();
        check_breaks(&breaks)?;
        let n = segments[0].1.nrows();
        for (_, m) in &segments {
            if m.nrows() != n || m.ncols() != n {
                return Err(Error::WrongDimension {
                    expected: n,
                    found: if m.nrows() != n { m.nrows() } else { m.ncols() },
                });
            }
            if m.iter().any(|v| !v.is_finite()) {
                return Err(Error::Schema("matrix entries must be finite".into()));
            }
        }
        Ok(Self::PiecewiseConstant { n, segments })
    }

    pub fn constant(value: DMatrix<f64>) -> Self {
        Self::PiecewiseConstant {
            n: value.nrows(),
            segments: vec![(0.0, value)],
        }
    }

    pub fn piecewise_smooth(n: usize, breaks: Vec<f64>, sampler: Sampler) -> Result<Self> {
        check_breaks(&breaks)?;
        Ok(Self::PiecewiseSmooth { n, breaks, sampler })
    }

    pub fn n(&self) -> usize {
        match self {
            Self::PiecewiseConstant { n, .. } | Self::PiecewiseSmooth { n, .. } => *n,
        }
    }

    pub fn kind(&self) -> FunctionKind {
        match self {
            Self::PiecewiseConstant { .. } => FunctionKind::PiecewiseConstant,
            Self::PiecewiseSmooth { .. } => FunctionKind::PiecewiseSmooth,
        }
    }

    pub fn breaks(&self) -> Vec<f64> {
        match self {
            Self::PiecewiseConstant { segments, .. } => segments.iter().map(|s| s.0).collect(),
            Self::PiecewiseSmooth { breaks, .. } => breaks.clone(),
        }
    }

    pub fn segment_count(&self) -> usize {
        match self {
            Self::PiecewiseConstant { segments, .. } => segments.len(),
            Self::PiecewiseSmooth { breaks, .. } => breaks.len(),
        }
    }

    pub fn segment_bounds(&self, k: usize) -> (f64, f64) {
        let b = self.breaks();
        (b[k], b.get(k + 1).copied().unwrap_or(1.0))
    }

    fn segment_of(&self, tau: f64) -> usize {
        let b = self.breaks();
        b.iter().rposition(|&s| s <= tau).unwrap_or(0)
    }

    /// Value at `τ mod 1`.
    pub fn eval(&self, tau: f64) -> DMatrix<f64> {
        let tau = tau.rem_euclid(1.0);
        self.eval_segment(self.segment_of(tau), tau)
    }

    /// Value of segment `k` at `τ`, with `τ` clamped into the segment so the
    /// right end gives the left limit.
    pub fn eval_segment(&self, k: usize, tau: f64) -> DMatrix<f64> {
        match self {
            Self::PiecewiseConstant { segments, .. } => segments[k].1.clone(),
            Self::PiecewiseSmooth { sampler, .. } => {
                let (a, b) = self.segment_bounds(k);
                let hi = (b - LEFT_LIMIT_GAP).max(a);
                sampler(tau.clamp(a, hi))
            }
        }
    }

    /// `∫₀¹ F(τ) dτ`, exact for piecewise constants.
    pub fn average(&self) -> DMatrix<f64> {
        let n = self.n();
        let mut acc = DMatrix::zeros(n, n);
        match self {
            Self::PiecewiseConstant { segments, .. } => {
                for (k, (_, m)) in segments.iter().enumerate() {
                    let (a, b) = self.segment_bounds(k);
                    acc += m * (b - a);
                }
            }
            Self::PiecewiseSmooth { .. } => {
                let rule = UnitRule::new(SMOOTH_NODES);
                for k in 0..self.segment_count() {
                    let (a, b) = self.segment_bounds(k);
                    for (&x, &w) in rule.nodes.iter().zip(&rule.weights) {
                        acc += self.eval_segment(k, a + (b - a) * x) * (w * (b - a));
                    }
                }
            }
        }
        acc
    }

    /// True when every segment holds the same constant matrix.
    pub fn is_time_independent(&self) -> bool {
        match self {
            Self::PiecewiseConstant { segments, .. } => {
                segments.iter().all(|(_, m)| m == &segments[0].1)
            }
            Self::PiecewiseSmooth { .. } => false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ValidationStatus {
    /// Every migration segment is irreducible.
    IrreducibleEverywhere,
    /// Some segment is reducible; Λ exists only where the monodromy matrix
    /// turns out positive.
    PositiveMonodromyOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub status: ValidationStatus,
    pub n: usize,
    pub piecewise_constant: bool,
    pub constant_migration: bool,
    pub irreducible_segments: Vec<bool>,
    pub mean_growth: Vec<f64>,
    pub all_sinks: bool,
}

/// A `[start, end)` interval on which both schedules are smooth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Piece {
    pub start: f64,
    pub end: f64,
    pub growth_segment: usize,
    pub migration_segment: usize,
}

impl Piece {
    pub fn len(&self) -> f64 {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.len() <= 0.0
    }

    pub fn mid(&self) -> f64 {
        0.5 * (self.start + self.end)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PatchModel {
    pub name: Option<String>,
    pub growth: PeriodicMatrixFunction,
    pub migration: PeriodicMatrixFunction,
}

impl PatchModel {
    /// Shape checks only; call [`PatchModel::validate`] for the structural ones.
    pub fn new(growth: PeriodicMatrixFunction, migration: PeriodicMatrixFunction) -> Result<Self> {
        let n = growth.n();
        if n < 2 {
            return Err(Error::Schema("n ≥ 2 required".into()));
        }
        if migration.n() != n {
            return Err(Error::WrongDimension {
                expected: n,
                found: migration.n(),
            });
        }
        let model = Self {
            name: None,
            growth,
            migration,
        };
        for piece in model.pieces() {
            let r = model.growth.eval_segment(piece.growth_segment, piece.mid());
            for i in 0..n {
                for j in 0..n {
                    if i != j && r[(i, j)] != 0.0 {
                        return Err(Error::Schema("growth matrix must be diagonal".into()));
                    }
                }
            }
        }
        Ok(model)
    }

    /// Builds a piecewise-constant model from per-segment growth vectors and
    /// migration matrices.
    pub fn from_segments(
        growth: Vec<(f64, Vec<f64>)>,
        migration: Vec<(f64, DMatrix<f64>)>,
    ) -> Result<Self> {
        let g = growth
            .into_iter()
            .map(|(b, r)| (b, DMatrix::from_diagonal(&DVector::from_vec(r))))
            .collect();
        Self::new(
            PeriodicMatrixFunction::piecewise_constant(g)?,
            PeriodicMatrixFunction::piecewise_constant(migration)?,
        )
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = Some(name.into());
        self
    }

    pub fn n(&self) -> usize {
        self.growth.n()
    }

    pub fn is_piecewise_constant(&self) -> bool {
        self.growth.kind() == FunctionKind::PiecewiseConstant
            && self.migration.kind() == FunctionKind::PiecewiseConstant
    }

    pub fn has_constant_migration(&self) -> bool {
        self.migration.is_time_independent()
    }

    /// Common refinement of the growth and migration breakpoints.
    pub fn pieces(&self) -> Vec<Piece> {
        let mut cuts: Vec<f64> = self.growth.breaks();
        cuts.extend(self.migration.breaks());
        cuts.sort_by(|a, b| a.total_cmp(b));
        cuts.dedup();
        let gb = self.growth.breaks();
        let mb = self.migration.breaks();
        let seg = |b: &[f64], t: f64| b.iter().rposition(|&s| s <= t).unwrap_or(0);
        cuts.iter()
            .enumerate()
            .map(|(k, &start)| {
                let end = cuts.get(k + 1).copied().unwrap_or(1.0);
                Piece {
                    start,
                    end,
                    growth_segment: seg(&gb, start),
                    migration_segment: seg(&mb, start),
                }
            })
            .collect()
    }

    /// Breakpoints of the combined schedule (starts of pieces).
    pub fn breakpoints(&self) -> Vec<f64> {
        self.pieces().iter().map(|p| p.start).collect()
    }

    pub fn growth_in(&self, piece: &Piece, tau: f64) -> DVector<f64> {
        self.growth
            .eval_segment(piece.growth_segment, clamp_piece(piece, tau))
            .diagonal()
    }

    pub fn migration_in(&self, piece: &Piece, tau: f64) -> DMatrix<f64> {
        self.migration
            .eval_segment(piece.migration_segment, clamp_piece(piece, tau))
    }

    /// `A(τ) = R(τ) + m L(τ)` on `piece`.
    pub fn generator_in(&self, piece: &Piece, m: f64, tau: f64) -> DMatrix<f64> {
        let mut a = self.migration_in(piece, tau) * m;
        let r = self.growth_in(piece, tau);
        for i in 0..self.n() {
            a[(i, i)] += r[i];
        }
        a
    }

    /// `A(τ)` at an arbitrary `τ` (taken mod 1).
    pub fn generator(&self, m: f64, tau: f64) -> DMatrix<f64> {
        let tau = tau.rem_euclid(1.0);
        let pieces = self.pieces();
        let p = pieces
            .iter()
            .rposition(|p| p.start <= tau)
            .map(|k| pieces[k])
            .unwrap_or(pieces[0]);
        self.generator_in(&p, m, tau)
    }

    /// `∫₀¹ f(piece, τ) dτ`: one evaluation per piece when both schedules are
    /// piecewise constant, Gauss-Legendre otherwise.
    pub fn integrate(&self, mut f: impl FnMut(&Piece, f64) -> f64) -> f64 {
        let pieces = self.pieces();
        if self.is_piecewise_constant() {
            pieces.iter().map(|p| p.len() * f(p, p.mid())).sum()
        } else {
            let rule = UnitRule::new(SMOOTH_NODES);
            pieces
                .iter()
                .map(|p| rule.integrate(p.start, p.end, |t| f(p, t)))
                .sum()
        }
    }

    /// `r̄_i = ∫₀¹ r_i`.
    pub fn mean_growth(&self) -> DVector<f64> {
        self.growth.average().diagonal()
    }

    pub fn mean_migration(&self) -> DMatrix<f64> {
        self.migration.average()
    }

    pub fn mean_generator(&self, m: f64) -> DMatrix<f64> {
        let mut a = self.mean_migration() * m;
        let r = self.mean_growth();
        for i in 0..self.n() {
            a[(i, i)] += r[i];
        }
        a
    }

    /// Sample points used to check smooth migration schedules.
    fn migration_samples(&self) -> Vec<(usize, DMatrix<f64>)> {
        let mig = &self.migration;
        (0..mig.segment_count())
            .flat_map(|k| {
                let (a, b) = mig.segment_bounds(k);
                match mig.kind() {
                    FunctionKind::PiecewiseConstant => vec![(k, mig.eval_segment(k, a))],
                    FunctionKind::PiecewiseSmooth => {
                        let rule = UnitRule::new(16);
                        let mut taus: Vec<f64> =
                            rule.nodes.iter().map(|x| a + (b - a) * x).collect();
                        taus.push(a);
                        taus.push(b);
                        taus.into_iter().map(|t| (k, mig.eval_segment(k, t))).collect()
                    }
                }
            })
            .collect()
    }

    /// Structural checks: sign pattern and column sums of every migration
    /// segment, then strong connectivity per segment.
    pub fn validate(&self) -> Result<ValidationReport> {
        let n = self.n();
        let mut irreducible = vec![true; self.migration.segment_count()];
        for (segment, l) in self.migration_samples() {
            for j in 0..n {
                for i in 0..n {
                    if i != j && l[(i, j)] < 0.0 {
                        return Err(Error::NegativeOffDiagonal { segment, i, j });
                    }
                }
                let residual: f64 = l.column(j).sum();
                if residual.abs() > COLUMN_SUM_TOL {
                    return Err(Error::ColumnSumViolation {
                        segment,
                        column: j,
                        residual,
                    });
                }
            }
            if !is_irreducible(&l) {
                irreducible[segment] = false;
            }
        }
        let mean = self.mean_growth();
        let status = if irreducible.iter().all(|&b| b) {
            ValidationStatus::IrreducibleEverywhere
        } else {
            ValidationStatus::PositiveMonodromyOnly
        };
        Ok(ValidationReport {
            status,
            n,
            piecewise_constant: self.is_piecewise_constant(),
            constant_migration: self.has_constant_migration(),
            irreducible_segments: irreducible,
            all_sinks: mean.iter().all(|&r| r < 0.0),
            mean_growth: mean.iter().copied().collect(),
        })
    }
}

fn clamp_piece(piece: &Piece, tau: f64) -> f64 {
    let hi = (piece.end - LEFT_LIMIT_GAP).max(piece.start);
    tau.clamp(piece.start, hi)
}

/// Builds a migration matrix from its off-diagonal entries `(i, j, ℓ_ij)`,
/// filling the diagonal so that columns sum to zero.
pub fn migration_matrix(n: usize, off_diagonal: &[(usize, usize, f64)]) -> DMatrix<f64> {
    let mut l = DMatrix::zeros(n, n);
    for &(i, j, v) in off_diagonal {
        assert!(i != j && i < n && j < n, "bad migration index ({i}, {j})");
        l[(i, j)] = v;
    }
    for j in 0..n {
        let s: f64 = (0..n).filter(|&i| i != j).map(|i| l[(i, j)]).sum();
        l[(j, j)] = -s;
    }
    l
}

/// Migration strength and period.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ModelParameters {
    pub m: f64,
    #[serde(rename = "T")]
    pub period: f64,
}

impl ModelParameters {
    pub fn new(m: f64, period: f64) -> Result<Self> {
        if !(m >= 0.0) || !m.is_finite() {
            return Err(Error::InvalidParameter(format!("m must be finite and ≥ 0, got {m}")));
        }
        if !(period > 0.0) || !period.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "T must be finite and > 0, got {period}"
            )));
        }
        Ok(Self { m, period })
    }
}
