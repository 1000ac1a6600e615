//! Whether dispersal can turn an all-sink system into a growing one.

use serde::Serialize;

use super::sweep::{sweep, Axis};
use crate::asymptotics::{chi, m_star, MStar, M_STAR_HI};
use crate::error::Result;
use crate::model::{PatchModel, ValidationStatus};

const EMPIRICAL_RESOLUTION: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "case", rename_all = "snake_case")]
pub enum DigCase {
    /// Growth for small `m` and large `T` only; `m*` bounds the growth region.
    Case1 { m_star: f64 },
    /// Growth at large `T` for every `m`.
    Case2,
    /// Some patch grows on its own.
    NotAllSinks,
    /// All sinks and `χ ≤ 0`.
    NoGrowth,
    /// Reducible migration with `χ > 0`; only the empirical summary decides.
    ReducibleUnknown,
}

/// Outcome of a default-grid sweep; evidence, not proof.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmpiricalSummary {
    pub resolution: usize,
    pub evaluated_cells: usize,
    pub excluded_cells: usize,
    pub positive_cells: usize,
    pub max_lambda: Option<f64>,
    pub growth_found: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DigVerdict {
    pub all_sinks: bool,
    pub chi: f64,
    pub dig_possible: bool,
    pub status: ValidationStatus,
    #[serde(flatten)]
    pub case: DigCase,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub empirical: Option<EmpiricalSummary>,
}

pub fn empirical_summary(model: &PatchModel, resolution: usize) -> Result<EmpiricalSummary> {
    let grid = sweep(
        model,
        Axis::log(Axis::DEFAULT_M.lo, Axis::DEFAULT_M.hi, resolution),
        Axis::log(Axis::DEFAULT_T.lo, Axis::DEFAULT_T.hi, resolution),
    )?;
    let evaluated = grid.ok_cells();
    let positive = grid
        .lambda
        .iter()
        .flatten()
        .filter(|v| v.is_finite() && **v > 0.0)
        .count();
    Ok(EmpiricalSummary {
        resolution,
        evaluated_cells: evaluated,
        excluded_cells: resolution * resolution - evaluated,
        positive_cells: positive,
        max_lambda: grid.max_lambda().map(|b| b.0),
        growth_found: positive > 0,
    })
}

pub fn classify_dig(model: &PatchModel) -> Result<DigVerdict> {
    let report = model.validate()?;
    let chi_v = chi(model);
    let all_sinks = report.all_sinks;
    let mut empirical = None;
    let case = if !all_sinks {
        DigCase::NotAllSinks
    } else if !(chi_v > 0.0) {
        DigCase::NoGrowth
    } else if report.status == ValidationStatus::PositiveMonodromyOnly {
        empirical = Some(empirical_summary(model, EMPIRICAL_RESOLUTION)?);
        DigCase::ReducibleUnknown
    } else {
        match m_star(model, M_STAR_HI)? {
            MStar::Root { m_star, .. } => DigCase::Case1 { m_star },
            MStar::GrowthForAllM => DigCase::Case2,
            MStar::NotApplicable { .. } => DigCase::NoGrowth,
        }
    };
    let dig_possible = match case {
        DigCase::Case1 { .. } | DigCase::Case2 => true,
        DigCase::ReducibleUnknown => empirical.as_ref().is_some_and(|e| e.growth_found),
        _ => false,
    };
    Ok(DigVerdict {
        all_sinks,
        chi: chi_v,
        dig_possible,
        status: report.status,
        case,
        empirical,
    })
}
