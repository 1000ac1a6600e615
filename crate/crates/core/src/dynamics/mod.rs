//! Monodromy matrices, the growth rate `Λ(m, T)`, and the simplex flow.

pub mod method;
pub mod simplex;

use nalgebra::DMatrix;
use serde::Serialize;

pub use method::{
    default_method, method_by_name, methods, ExponentialProduct, MethodKind, MonodromyMethod,
    Rk4Fundamental, StepPlan,
};
pub use simplex::{
    growth_rate_h_formula, growth_rate_integral, periodic_simplex_solution, simplex_trajectory,
    verify_slow_curve, HFormula, SimplexTrajectory, SlowCurveReport, DEFECT_TOL,
};

use crate::error::{Error, Result};
use crate::model::{ModelParameters, PatchModel, ValidationStatus};
use crate::spectral::{perron_nonnegative, perron_positive, PerronOptions, ScaledMatrix};

/// Scaled monodromy entries at or below this count as zero for models whose
/// positivity is not structural.
pub const POSITIVITY_FLOOR: f64 = 1e-300;

/// Rounding slack for negative entries produced by integration.
const NEGATIVE_SLACK: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CrossChecks {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub integral: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub integral_error: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub h_formula: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub h_formula_error: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub min_h: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GrowthResult {
    pub lambda: f64,
    /// Perron root of `Φ(T)`; `None` when it is not representable.
    pub mu: Option<f64>,
    pub ln_mu: f64,
    pub pi: Vec<f64>,
    pub method: MethodKind,
    pub perron_residual: f64,
    #[serde(rename = "cross_checks", skip_serializing_if = "Option::is_none")]
    pub cross_check: Option<CrossChecks>,
}

/// Validates once and evaluates `Λ` at many parameter points.
pub struct GrowthEvaluator<'a> {
    pub model: &'a PatchModel,
    pub status: ValidationStatus,
    method: Box<dyn MonodromyMethod>,
}

impl<'a> GrowthEvaluator<'a> {
    pub fn new(model: &'a PatchModel) -> Result<Self> {
        let status = model.validate()?.status;
        Ok(Self {
            model,
            status,
            method: default_method(model),
        })
    }

    pub fn with_method(model: &'a PatchModel, method: Box<dyn MonodromyMethod>) -> Result<Self> {
        if !method.supports(model) {
            return Err(Error::InvalidParameter(format!(
                "method `{}` does not support this model",
                method.name()
            )));
        }
        let mut e = Self::new(model)?;
        e.method = method;
        Ok(e)
    }

    pub fn method(&self) -> &dyn MonodromyMethod {
        self.method.as_ref()
    }

    /// `Φ(T)`, certified positive for models whose positivity is not structural.
    pub fn monodromy(&self, params: &ModelParameters) -> Result<ScaledMatrix> {
        let mut phi = self.method.monodromy(self.model, params)?;
        let min = phi.matrix.min();
        if min < -NEGATIVE_SLACK {
            return Err(Error::IntegrationFailure(format!(
                "monodromy has negative entry {min:e}"
            )));
        }
        if self.status == ValidationStatus::PositiveMonodromyOnly && !(min > POSITIVITY_FLOOR) {
            return Err(Error::NonPositiveMonodromy { min_entry: min });
        }
        phi.matrix.iter_mut().for_each(|v| *v = v.max(0.0));
        Ok(phi)
    }

    pub fn growth_rate(&self, params: &ModelParameters) -> Result<GrowthResult> {
        if !(params.m > 0.0) {
            return Err(Error::InvalidParameter(
                "growth_rate needs m > 0; the m → 0 limit is limit_m0".into(),
            ));
        }
        let phi = self.monodromy(params)?;
        let opts = PerronOptions::default();
        let pair = if phi.matrix.min() > 0.0 {
            perron_positive(&phi.matrix, &opts)?
        } else {
            perron_nonnegative(&phi.matrix, &opts)?
        };
        if !(pair.root > 0.0) {
            return Err(Error::NonPositiveMonodromy {
                min_entry: phi.matrix.min(),
            });
        }
        let ln_mu = pair.root.ln() + phi.log_scale;
        let mu = Some(ln_mu.exp()).filter(|v| v.is_finite() && *v > 0.0);
        Ok(GrowthResult {
            lambda: ln_mu / params.period,
            mu,
            ln_mu,
            pi: pair.vector.iter().copied().collect(),
            method: self.method.kind(),
            perron_residual: pair.residual,
            cross_check: None,
        })
    }

    /// Λ or the reason it is undefined, without the rest of the result.
    pub fn lambda(&self, params: &ModelParameters) -> Result<f64> {
        self.growth_rate(params).map(|g| g.lambda)
    }
}

/// `Φ(T)` with the default method for the model.
pub fn monodromy(model: &PatchModel, params: &ModelParameters) -> Result<ScaledMatrix> {
    GrowthEvaluator::new(model)?.monodromy(params)
}

/// `Φ(T)` as a plain matrix; overflows for large `Λ T`.
pub fn monodromy_matrix(model: &PatchModel, params: &ModelParameters) -> Result<DMatrix<f64>> {
    let phi = monodromy(model, params)?;
    let m = phi.to_matrix();
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::Overflow);
    }
    Ok(m)
}

pub fn growth_rate(model: &PatchModel, params: &ModelParameters) -> Result<GrowthResult> {
    GrowthEvaluator::new(model)?.growth_rate(params)
}

pub fn growth_rate_with(
    model: &PatchModel,
    params: &ModelParameters,
    method: Box<dyn MonodromyMethod>,
) -> Result<GrowthResult> {
    GrowthEvaluator::with_method(model, method)?.growth_rate(params)
}

/// Growth rate plus the integral and (for constant migration) h-formula
/// cross-checks.
pub fn growth_rate_checked(
    model: &PatchModel,
    params: &ModelParameters,
    check_integral: bool,
    check_h: bool,
) -> Result<GrowthResult> {
    let mut g = growth_rate(model, params)?;
    if !(check_integral || check_h) {
        return Ok(g);
    }
    let traj = periodic_simplex_solution(model, params, simplex::DEFAULT_RESOLUTION)?;
    let mut cc = CrossChecks {
        integral: None,
        integral_error: None,
        h_formula: None,
        h_formula_error: None,
        min_h: None,
    };
    if check_integral {
        let v = simplex::integral_along(model, params, &traj)?;
        cc.integral = Some(v);
        cc.integral_error = Some((v - g.lambda).abs());
    }
    if check_h {
        let h = simplex::h_formula_along(model, params, &traj)?;
        cc.h_formula = Some(h.lambda);
        cc.h_formula_error = Some((h.lambda - g.lambda).abs());
        cc.min_h = Some(h.min_h);
    }
    g.cross_check = Some(cc);
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::builtin;
    use crate::spectral::expm;

    #[test]
    fn pm1_monodromy_is_product_of_halves() {
        let model = builtin("pm1(0.5)").unwrap();
        let (m, t) = (1.3, 4.0);
        let a = DMatrix::from_row_slice(2, 2, &[0.5 - m, m, m, -1.5 - m]);
        let b = DMatrix::from_row_slice(2, 2, &[-1.5 - m, m, m, 0.5 - m]);
        let expected = expm(&b, t / 2.0).unwrap() * expm(&a, t / 2.0).unwrap();
        let p = ModelParameters::new(m, t).unwrap();
        let got = monodromy_matrix(&model, &p).unwrap();
        assert!((got - expected).amax() < 1e-13);
    }

    #[test]
    fn equal_rates_give_the_common_mean() {
        let model = PatchModel::from_segments(
            vec![(0.0, vec![0.3, 0.3]), (0.4, vec![-1.0, -1.0])],
            vec![
                (0.0, crate::model::migration_matrix(2, &[(0, 1, 2.0), (1, 0, 0.5)])),
                (0.7, crate::model::migration_matrix(2, &[(0, 1, 1.0), (1, 0, 3.0)])),
            ],
        )
        .unwrap();
        for (m, t) in [(0.1, 0.5), (2.0, 30.0), (10.0, 500.0)] {
            let g = growth_rate(&model, &ModelParameters::new(m, t).unwrap()).unwrap();
            assert!((g.lambda - (0.4 * 0.3 - 0.6)).abs() < 1e-12, "{m} {t}");
        }
    }

    #[test]
    fn m_zero_rejected() {
        let model = builtin("ab1").unwrap();
        assert!(matches!(
            growth_rate(&model, &ModelParameters::new(0.0, 1.0).unwrap()),
            Err(Error::InvalidParameter(_))
        ));
    }

    #[test]
    fn fainshil_unperturbed_is_not_positive() {
        let model = builtin("fainshil(0,0)").unwrap();
        let p = ModelParameters::new(1.0, 2.0).unwrap();
        assert!(matches!(
            growth_rate(&model, &p),
            Err(Error::NonPositiveMonodromy { .. })
        ));
    }

    #[test]
    fn huge_period_does_not_overflow() {
        let model = builtin("ab1").unwrap();
        let g = growth_rate(&model, &ModelParameters::new(0.01, 1e5).unwrap()).unwrap();
        assert!(g.lambda.is_finite() && g.lambda < 0.5);
        assert!(g.mu.is_none() || g.mu.unwrap().is_finite());
    }

    #[test]
    fn rk4_method_matches_exact() {
        let model = builtin("abc_two_patch").unwrap();
        let p = ModelParameters::new(2.0, 7.0).unwrap();
        let a = growth_rate(&model, &p).unwrap();
        let b = growth_rate_with(&model, &p, Box::new(Rk4Fundamental::default())).unwrap();
        assert_eq!(b.method, MethodKind::IntegratedFundamental);
        assert!((a.lambda - b.lambda).abs() < 1e-10);
    }
}
