//! Parameter-plane exploration: sweeps, critical curves `Λ = 0`, growth
//! classification, and the data behind the reference figures.

pub mod classify;
pub mod contour;
pub mod monotone;
pub mod reproduce;
pub mod sweep;

pub use classify::{classify_dig, empirical_summary, DigCase, DigVerdict, EmpiricalSummary};
pub use contour::{
    branch_tip, critical_curve, critical_period, trace_zero_set, Branch, CriticalCurve, CurvePoint,
};
pub use monotone::{monotonicity_scan, MonotonicityReport, MonotoneRow, Shape};
pub use reproduce::{figure_registry, reproduce, FigureOptions, FigureRecipe, Table, Value};
pub use sweep::{sweep, sweep_values, Axis, CellStatus, SweepGrid};
