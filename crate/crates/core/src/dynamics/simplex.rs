//! The projected flow `θ' = Aθ − ⟨Aθ, 1⟩θ` on the simplex and the integral
//! identities for `Λ` built on its periodic solution.
//!
//! `θ` is advanced through the linear lift `x' = A x` followed by division by
//! the coordinate sum, which solves the projected flow exactly. Piecewise-
//! constant models use exact step propagators `e^{hA}`; smooth ones use RK4 on
//! the same step grid as [`Rk4Fundamental`], so `θ(0) = π` closes up to the
//! Perron tolerance in both cases.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::method::{rk4_step, Rk4Fundamental, StepPlan};
use super::{growth_rate, growth_rate_with};
use crate::error::{Error, Result};
use crate::model::{ModelParameters, PatchModel, Piece};
use crate::quadrature::UnitRule;
use crate::spectral::{expm, kernel_vector, perron_frobenius_metzler, PerronOptions};

/// Periodic defect allowed for `θ*`.
pub const DEFECT_TOL: f64 = 1e-8;

/// Minimum steps per period.
pub const DEFAULT_RESOLUTION: usize = 2000;

/// `h·‖A‖₁` per step with exact propagators; bounds the Gauss-Legendre
/// quadrature error inside a step, not the propagation error.
const EXACT_STEP_NORM: f64 = 2.0;
const RK4_STEP_NORM: f64 = 0.05;
const NODES_PER_STEP: usize = 5;

#[derive(Debug, Clone, Serialize)]
pub struct SimplexTrajectory {
    /// Absolute times, from 0 to `periods · T`.
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    /// `‖θ(end) − θ(end − T)‖_∞`.
    pub periodic_defect: f64,
    pub periods: usize,
    /// Minimum steps per period used to build the trajectory.
    pub resolution: usize,
    /// Piece index of the step that starts at `times[k]`.
    #[serde(skip)]
    step_piece: Vec<usize>,
}

impl SimplexTrajectory {
    pub fn last(&self) -> &[f64] {
        self.states.last().expect("non-empty trajectory")
    }
}

enum Propagator {
    /// Per piece: `e^{hA}` and `e^{c_g h A}` for the quadrature nodes.
    Exact(Vec<(DMatrix<f64>, Vec<DMatrix<f64>>)>),
    Rk4,
}

struct Stepper<'a> {
    model: &'a PatchModel,
    params: ModelParameters,
    plan: StepPlan,
    prop: Propagator,
    rule: UnitRule,
}

impl<'a> Stepper<'a> {
    fn new(model: &'a PatchModel, params: &ModelParameters, resolution: usize) -> Result<Self> {
        let rule = UnitRule::new(NODES_PER_STEP);
        if model.is_piecewise_constant() {
            let plan = StepPlan::new(model, params, resolution, EXACT_STEP_NORM);
            let mut props = Vec::with_capacity(plan.pieces.len());
            for (piece, steps) in &plan.pieces {
                let a = model.generator_in(piece, params.m, piece.start);
                let h = piece.len() * params.period / *steps as f64;
                let step = expm(&a, h)?;
                let nodes = rule
                    .nodes
                    .iter()
                    .map(|c| expm(&a, c * h))
                    .collect::<Result<Vec<_>>>()?;
                props.push((step, nodes));
            }
            Ok(Self {
                model,
                params: *params,
                plan,
                prop: Propagator::Exact(props),
                rule,
            })
        } else {
            let plan = StepPlan::new(model, params, resolution.max(2000), RK4_STEP_NORM);
            Ok(Self {
                model,
                params: *params,
                plan,
                prop: Propagator::Rk4,
                rule,
            })
        }
    }

    fn step_len(&self, k: usize) -> f64 {
        let (p, s) = &self.plan.pieces[k];
        p.len() * self.params.period / *s as f64
    }

    /// Advances `θ` by a fraction `c ∈ (0, 1]` of step `s` of piece `k`.
    fn advance(&self, k: usize, s: usize, c: Option<usize>, theta: &DMatrix<f64>) -> DMatrix<f64> {
        let x = match &self.prop {
            Propagator::Exact(props) => match c {
                None => &props[k].0 * theta,
                Some(g) => &props[k].1[g] * theta,
            },
            Propagator::Rk4 => {
                let (piece, steps) = &self.plan.pieces[k];
                let h = self.step_len(k);
                let tau = piece.start + piece.len() * s as f64 / *steps as f64;
                let frac = c.map(|g| self.rule.nodes[g]).unwrap_or(1.0);
                rk4_step(self.model, piece, &self.params, tau, frac * h, theta)
            }
        };
        let sum = x.sum();
        x / sum
    }

    fn step_tau(&self, k: usize, s: usize) -> f64 {
        let (piece, steps) = &self.plan.pieces[k];
        piece.start + piece.len() * s as f64 / *steps as f64
    }
}

fn to_simplex(v: &[f64], n: usize) -> Result<DMatrix<f64>> {
    if v.len() != n {
        return Err(Error::WrongDimension {
            expected: n,
            found: v.len(),
        });
    }
    if v.iter().any(|&c| !(c > 0.0) || !c.is_finite()) {
        return Err(Error::InvalidParameter(
            "initial state must have positive entries".into(),
        ));
    }
    let s: f64 = v.iter().sum();
    Ok(DMatrix::from_iterator(n, 1, v.iter().map(|c| c / s)))
}

fn run(
    stepper: &Stepper,
    theta0: &DMatrix<f64>,
    periods: usize,
    resolution: usize,
) -> Result<SimplexTrajectory> {
    let n = theta0.nrows();
    let total = stepper.plan.total_steps() * periods + 1;
    let mut times = Vec::with_capacity(total);
    let mut states = Vec::with_capacity(total);
    let mut step_piece = Vec::with_capacity(total);
    let mut theta = theta0.clone();
    let mut t = 0.0;
    let mut period_start = theta.clone();
    times.push(0.0);
    states.push(theta.iter().copied().collect::<Vec<_>>());
    for period in 0..periods {
        if period + 1 == periods {
            period_start = theta.clone();
        }
        for (k, (_, steps)) in stepper.plan.pieces.iter().enumerate() {
            let h = stepper.step_len(k);
            for s in 0..*steps {
                theta = stepper.advance(k, s, None, &theta);
                if theta.iter().any(|c| !c.is_finite() || *c < 0.0) {
                    return Err(Error::IntegrationFailure(format!(
                        "simplex state left Δ at t = {t}"
                    )));
                }
                t += h;
                step_piece.push(k);
                times.push(t);
                states.push(theta.iter().copied().collect());
            }
        }
        // absorb the accumulated step rounding
        *times.last_mut().expect("non-empty") = (period + 1) as f64 * stepper.params.period;
        t = (period + 1) as f64 * stepper.params.period;
    }
    let defect = (&theta - &period_start).amax();
    debug_assert_eq!(states[0].len(), n);
    Ok(SimplexTrajectory {
        times,
        states,
        periodic_defect: defect,
        periods,
        resolution,
        step_piece,
    })
}

/// Trajectory of the projected flow from an arbitrary positive start.
pub fn simplex_trajectory(
    model: &PatchModel,
    params: &ModelParameters,
    theta0: &[f64],
    periods: usize,
    resolution: usize,
) -> Result<SimplexTrajectory> {
    let stepper = Stepper::new(model, params, resolution)?;
    let theta = to_simplex(theta0, model.n())?;
    run(&stepper, &theta, periods.max(1), resolution)
}

/// `θ*` over one period, started at the Perron vector of `Φ(T)`.
pub fn periodic_simplex_solution(
    model: &PatchModel,
    params: &ModelParameters,
    resolution: usize,
) -> Result<SimplexTrajectory> {
    let g = if model.is_piecewise_constant() {
        growth_rate(model, params)?
    } else {
        growth_rate_with(
            model,
            params,
            Box::new(Rk4Fundamental {
                min_steps: resolution.max(2000),
                step_norm: RK4_STEP_NORM,
            }),
        )?
    };
    let traj = simplex_trajectory(model, params, &g.pi, 1, resolution)?;
    if traj.periodic_defect > DEFECT_TOL {
        return Err(Error::PeriodicityDefectExceeded {
            defect: traj.periodic_defect,
            tolerance: DEFECT_TOL,
        });
    }
    Ok(traj)
}

/// `(1/T) ∫₀^T f(piece, τ, θ(t)) dt` over the first period of `traj`, with
/// Gauss-Legendre nodes inside each step.
fn integrate_along(
    model: &PatchModel,
    params: &ModelParameters,
    traj: &SimplexTrajectory,
    mut f: impl FnMut(&Piece, f64, &DMatrix<f64>) -> f64,
) -> Result<f64> {
    let stepper = Stepper::new(model, params, traj.resolution)?;
    let n = model.n();
    let mut acc = 0.0;
    let mut idx = 0;
    for (k, (piece, steps)) in stepper.plan.pieces.iter().enumerate() {
        let h = stepper.step_len(k);
        for s in 0..*steps {
            if traj.step_piece.get(idx) != Some(&k) {
                return Err(Error::IntegrationFailure(
                    "trajectory does not match the step plan".into(),
                ));
            }
            let theta = DMatrix::from_column_slice(n, 1, &traj.states[idx]);
            let tau0 = stepper.step_tau(k, s);
            let dtau = h / params.period;
            let mut local = 0.0;
            for (g, w) in stepper.rule.weights.iter().enumerate() {
                let node = stepper.advance(k, s, Some(g), &theta);
                let tau = tau0 + stepper.rule.nodes[g] * dtau;
                local += w * f(piece, tau, &node);
            }
            acc += local * h;
            idx += 1;
        }
    }
    Ok(acc / params.period)
}

pub(crate) fn integral_along(
    model: &PatchModel,
    params: &ModelParameters,
    traj: &SimplexTrajectory,
) -> Result<f64> {
    integrate_along(model, params, traj, |piece, tau, theta| {
        let r = model.growth_in(piece, tau);
        r.iter().zip(theta.iter()).map(|(a, b)| a * b).sum()
    })
}

/// `Λ = ∫₀¹ Σ r_i(τ) θ*_i(Tτ) dτ`.
pub fn growth_rate_integral(model: &PatchModel, params: &ModelParameters) -> Result<f64> {
    let traj = periodic_simplex_solution(model, params, DEFAULT_RESOLUTION)?;
    integral_along(model, params, &traj)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HFormula {
    pub lambda: f64,
    /// `Σ p_i r̄_i`, the infimum of `Λ` over all `(m, T)`.
    pub baseline: f64,
    /// Smallest `h(θ*)` seen at a quadrature node.
    pub min_h: f64,
}

/// Tolerance on the sign of `h`.
const H_SLACK: f64 = 1e-10;

pub(crate) fn h_formula_along(
    model: &PatchModel,
    params: &ModelParameters,
    traj: &SimplexTrajectory,
) -> Result<HFormula> {
    if !model.has_constant_migration() {
        return Err(Error::NonConstantMigration);
    }
    let l = model.migration.eval(0.0);
    let p = kernel_vector(&l)?;
    let baseline = p.dot(&model.mean_growth());
    let n = model.n();
    let mut min_h = f64::INFINITY;
    let integral = integrate_along(model, params, traj, |_, _, theta| {
        let lx = &l * theta;
        let h: f64 = (0..n).map(|i| lx[(i, 0)] * p[i] / theta[(i, 0)]).sum();
        min_h = min_h.min(h);
        h
    })?;
    if min_h < -H_SLACK {
        return Err(Error::IntegrationFailure(format!(
            "h(θ*) = {min_h:e} is negative"
        )));
    }
    Ok(HFormula {
        lambda: baseline + params.m * integral,
        baseline,
        min_h,
    })
}

/// `Λ = Σ p_i r̄_i + m ∫₀¹ h(θ*(Tτ)) dτ` for time-independent migration, with
/// `h(x) = Σ_i (Σ_j ℓ_ij x_j) p_i / x_i ≥ 0`.
pub fn growth_rate_h_formula(model: &PatchModel, params: &ModelParameters) -> Result<HFormula> {
    if !model.has_constant_migration() {
        return Err(Error::NonConstantMigration);
    }
    let traj = periodic_simplex_solution(model, params, DEFAULT_RESOLUTION)?;
    h_formula_along(model, params, &traj)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SlowCurveReport {
    /// `sup ‖θ*(Tτ) − v(τ)‖_∞` over grid points outside the layers.
    pub sup_deviation: f64,
    pub argmax_tau: f64,
    pub samples: usize,
    pub layer_width: f64,
    pub period: f64,
    /// Breakpoints `τ_k` whose layers `[τ_k, τ_k + ν]` were excluded.
    pub layers: Vec<f64>,
}

/// Perron-Frobenius vector of `A(τ)` on `piece`.
pub fn slow_vector(model: &PatchModel, m: f64, piece: &Piece, tau: f64) -> Result<DVector<f64>> {
    let a = model.generator_in(piece, m, tau);
    Ok(perron_frobenius_metzler(&a, &PerronOptions::default())?.vector)
}

/// Distance between `θ*` and the slow curve `v(τ)` away from the breakpoints.
pub fn verify_slow_curve(
    model: &PatchModel,
    params: &ModelParameters,
    layer_width: f64,
) -> Result<SlowCurveReport> {
    if !(0.0..1.0).contains(&layer_width) {
        return Err(Error::InvalidParameter("layer width must be in [0, 1)".into()));
    }
    let traj = periodic_simplex_solution(model, params, DEFAULT_RESOLUTION)?;
    let pieces = model.pieces();
    let layers: Vec<f64> = pieces.iter().map(|p| p.start).collect();
    let constant = model.is_piecewise_constant();
    let cached: Vec<Option<DVector<f64>>> = pieces
        .iter()
        .map(|p| {
            if constant {
                slow_vector(model, params.m, p, p.start).ok()
            } else {
                None
            }
        })
        .collect();
    let mut sup = 0.0f64;
    let mut argmax = 0.0;
    let mut samples = 0;
    for (t, theta) in traj.times.iter().zip(&traj.states) {
        let tau = (t / params.period).rem_euclid(1.0);
        let in_layer = layers.iter().any(|&b| tau >= b && tau <= b + layer_width);
        if in_layer {
            continue;
        }
        let k = pieces.iter().rposition(|p| p.start <= tau).unwrap_or(0);
        let v = match &cached[k] {
            Some(v) => v.clone(),
            None => slow_vector(model, params.m, &pieces[k], tau)?,
        };
        let d = theta
            .iter()
            .zip(v.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        samples += 1;
        if d > sup {
            sup = d;
            argmax = tau;
        }
    }
    Ok(SlowCurveReport {
        sup_deviation: sup,
        argmax_tau: argmax,
        samples,
        layer_width,
        period: params.period,
        layers,
    })
}
