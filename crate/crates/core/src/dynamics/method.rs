//! Monodromy integrators, selectable by name.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{ModelParameters, PatchModel, Piece};
use crate::spectral::{expm_scaled, ScaledMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum MethodKind {
    ExponentialProduct,
    IntegratedFundamental,
}

/// Computes `Φ(T)` over one period.
pub trait MonodromyMethod: Send + Sync {
    fn name(&self) -> &'static str;
    fn kind(&self) -> MethodKind;
    fn supports(&self, model: &PatchModel) -> bool;
    fn monodromy(&self, model: &PatchModel, params: &ModelParameters) -> Result<ScaledMatrix>;
}

/// Exact ordered product of piece exponentials; piecewise-constant models only.
#[derive(Debug, Clone, Copy, Default)]
pub struct ExponentialProduct;

impl MonodromyMethod for ExponentialProduct {
    fn name(&self) -> &'static str {
        "exponential-product"
    }

    fn kind(&self) -> MethodKind {
        MethodKind::ExponentialProduct
    }

    fn supports(&self, model: &PatchModel) -> bool {
        model.is_piecewise_constant()
    }

    fn monodromy(&self, model: &PatchModel, params: &ModelParameters) -> Result<ScaledMatrix> {
        if !self.supports(model) {
            return Err(Error::InvalidParameter(
                "exponential-product needs a piecewise-constant model".into(),
            ));
        }
        let mut phi = ScaledMatrix::identity(model.n());
        for piece in model.pieces() {
            let a = model.generator_in(&piece, params.m, piece.start);
            let factor = expm_scaled(&a, piece.len() * params.period)?;
            phi = phi.then_left(&factor);
        }
        Ok(phi)
    }
}

/// Classical RK4 on `X' = A(t/T) X`, steps aligned to the breakpoints.
#[derive(Debug, Clone, Copy)]
pub struct Rk4Fundamental {
    pub min_steps: usize,
    /// Upper bound on `h·‖A‖₁` per step.
    pub step_norm: f64,
}

impl Default for Rk4Fundamental {
    fn default() -> Self {
        Self {
            min_steps: 2000,
            step_norm: 0.05,
        }
    }
}

/// Step counts per piece for a fixed-step scheme.
#[derive(Debug, Clone)]
pub struct StepPlan {
    pub pieces: Vec<(Piece, usize)>,
}

impl StepPlan {
    /// At least `min_steps` per period (spread by piece length) and at most
    /// `step_norm / ‖A‖₁` time units per step.
    pub fn new(model: &PatchModel, params: &ModelParameters, min_steps: usize, step_norm: f64) -> Self {
        let pieces = model
            .pieces()
            .into_iter()
            .map(|p| {
                let norm = [p.start, p.mid(), p.end]
                    .iter()
                    .map(|&t| norm1(&model.generator_in(&p, params.m, t)))
                    .fold(0.0, f64::max);
                let by_count = (min_steps as f64 * p.len()).ceil();
                let by_norm = (p.len() * params.period * norm / step_norm).ceil();
                let steps = by_count.max(by_norm).max(1.0);
                (p, steps as usize)
            })
            .collect();
        Self { pieces }
    }

    pub fn total_steps(&self) -> usize {
        self.pieces.iter().map(|p| p.1).sum()
    }
}

pub(crate) fn norm1(a: &DMatrix<f64>) -> f64 {
    a.column_iter()
        .map(|c| c.iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// One RK4 step of `X' = A(t/T) X` from time `t` (in period units `τ`).
pub(crate) fn rk4_step(
    model: &PatchModel,
    piece: &Piece,
    params: &ModelParameters,
    tau: f64,
    h: f64,
    x: &DMatrix<f64>,
) -> DMatrix<f64> {
    let dtau = h / params.period;
    let a0 = model.generator_in(piece, params.m, tau);
    let a1 = model.generator_in(piece, params.m, tau + 0.5 * dtau);
    let a2 = model.generator_in(piece, params.m, tau + dtau);
    let k1 = &a0 * x;
    let k2 = &a1 * (x + &k1 * (0.5 * h));
    let k3 = &a1 * (x + &k2 * (0.5 * h));
    let k4 = &a2 * (x + &k3 * h);
    x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0)
}

impl MonodromyMethod for Rk4Fundamental {
    fn name(&self) -> &'static str {
        "rk4"
    }

    fn kind(&self) -> MethodKind {
        MethodKind::IntegratedFundamental
    }

    fn supports(&self, _model: &PatchModel) -> bool {
        true
    }

    fn monodromy(&self, model: &PatchModel, params: &ModelParameters) -> Result<ScaledMatrix> {
        let plan = StepPlan::new(model, params, self.min_steps, self.step_norm);
        let mut phi = ScaledMatrix::identity(model.n());
        for (piece, steps) in &plan.pieces {
            let h = piece.len() * params.period / *steps as f64;
            for s in 0..*steps {
                let tau = piece.start + piece.len() * s as f64 / *steps as f64;
                phi.matrix = rk4_step(model, piece, params, tau, h, &phi.matrix);
                phi.normalize();
                if phi.matrix.iter().any(|v| !v.is_finite()) {
                    return Err(Error::IntegrationFailure(format!(
                        "non-finite fundamental matrix at τ = {tau}"
                    )));
                }
            }
        }
        Ok(phi)
    }
}

/// Every registered integrator.
pub fn methods() -> Vec<Box<dyn MonodromyMethod>> {
    vec![
        Box::new(ExponentialProduct),
        Box::new(Rk4Fundamental::default()),
    ]
}

pub fn method_by_name(name: &str) -> Result<Box<dyn MonodromyMethod>> {
    methods()
        .into_iter()
        .find(|m| m.name() == name)
        .ok_or_else(|| Error::UnknownMethod(name.to_string()))
}

/// Exponential product when the model allows it, RK4 otherwise.
pub fn default_method(model: &PatchModel) -> Box<dyn MonodromyMethod> {
    if model.is_piecewise_constant() {
        Box::new(ExponentialProduct)
    } else {
        Box::new(Rk4Fundamental::default())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::builtin;

    #[test]
    fn methods_agree_on_ab1() {
        let model = builtin("ab1").unwrap();
        let p = ModelParameters::new(0.7, 3.0).unwrap();
        let exact = ExponentialProduct.monodromy(&model, &p).unwrap().to_matrix();
        let rk = Rk4Fundamental::default().monodromy(&model, &p).unwrap().to_matrix();
        assert!((exact - rk).amax() < 1e-9);
    }

    #[test]
    fn registry_lookup() {
        assert_eq!(method_by_name("rk4").unwrap().name(), "rk4");
        assert!(matches!(
            method_by_name("euler"),
            Err(Error::UnknownMethod(_))
        ));
    }

    #[test]
    fn plan_respects_breakpoints_and_norm() {
        let model = builtin("abc_two_patch").unwrap();
        let p = ModelParameters::new(1.0, 100.0).unwrap();
        let plan = StepPlan::new(&model, &p, 2000, 0.05);
        assert_eq!(plan.pieces.len(), 3);
        assert!(plan.pieces.iter().all(|(_, s)| *s >= 667));
        assert!(plan.total_steps() > 2000);
    }
}
