//! Limits of `Λ(m, T)` as `T` or `m` go to 0 or ∞, the threshold `χ`, and
//! the root `m*` of the slow-regime limit.

use nalgebra::DVector;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{PatchModel, ValidationStatus};
use crate::spectral::{kernel_vector, spectral_abscissa};

/// Slack for the monotonicity and convexity checks.
pub const SHAPE_SLACK: f64 = 1e-8;

/// Mean growth rates closer than this are treated as equal.
pub const EQUALITY_TOL: f64 = 1e-12;

pub const M_STAR_LO: f64 = 1e-6;
pub const M_STAR_HI: f64 = 100.0;
const M_STAR_MAX_ITER: usize = 200;

/// `χ = ∫₀¹ max_i r_i(τ) dτ`.
pub fn chi(model: &PatchModel) -> f64 {
    model.integrate(|p, t| model.growth_in(p, t).max())
}

fn check_m(m: f64) -> Result<()> {
    if !(m >= 0.0) || !m.is_finite() {
        return Err(Error::InvalidParameter(format!("m must be finite and ≥ 0, got {m}")));
    }
    Ok(())
}

/// Fast regime `T → 0`: `λ_max(avg R + m avg L)`.
pub fn limit_t0(model: &PatchModel, m: f64) -> Result<f64> {
    check_m(m)?;
    Ok(spectral_abscissa(&model.mean_generator(m)))
}

/// Slow regime `T → ∞`: `∫₀¹ λ_max(R(τ) + m L(τ)) dτ`.
pub fn limit_tinf(model: &PatchModel, m: f64) -> Result<f64> {
    check_m(m)?;
    Ok(model.integrate(|p, t| spectral_abscissa(&model.generator_in(p, m, t))))
}

/// Slow migration `m → 0`: `max_i r̄_i`, for every `T`.
pub fn limit_m0(model: &PatchModel) -> f64 {
    model.mean_growth().max()
}

/// Fast migration `m → ∞`: `∫₀¹ Σ_i p_i(τ) r_i(τ) dτ` with `p(τ)` the kernel
/// vector of `L(τ)`, for every `T`.
pub fn limit_minf(model: &PatchModel) -> Result<f64> {
    let mut err = None;
    let v = model.integrate(|p, t| match kernel_vector(&model.migration_in(p, t)) {
        Ok(k) => k.dot(&model.growth_in(p, t)),
        Err(e) => {
            err.get_or_insert(e);
            f64::NAN
        }
    });
    match err {
        Some(e) => Err(e),
        None => Ok(v),
    }
}

/// Kernel vector of the averaged migration matrix.
pub fn averaged_kernel(model: &PatchModel) -> Result<DVector<f64>> {
    kernel_vector(&model.mean_migration())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Corners {
    /// `Λ(0, 0) = max_i r̄_i`
    pub m0_t0: f64,
    /// `Λ(∞, 0) = Σ q_i r̄_i`
    pub minf_t0: f64,
    /// `Λ(0, ∞) = χ`
    pub m0_tinf: f64,
    /// `Λ(∞, ∞) = ∫ Σ p_i r_i`
    pub minf_tinf: f64,
}

pub fn corners(model: &PatchModel) -> Result<Corners> {
    let q = averaged_kernel(model)?;
    Ok(Corners {
        m0_t0: limit_m0(model),
        minf_t0: q.dot(&model.mean_growth()),
        m0_tinf: chi(model),
        minf_tinf: limit_minf(model)?,
    })
}

/// Outcome of the search for `m*`.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "case", rename_all = "snake_case")]
pub enum MStar {
    /// `Λ(m, ∞) > 0` exactly for `m < m*`.
    Root { m_star: f64, residual: f64 },
    /// `Λ(m, ∞) > 0` for every `m`.
    GrowthForAllM,
    NotApplicable { reason: String },
}

impl MStar {
    pub fn value(&self) -> Option<f64> {
        match self {
            MStar::Root { m_star, .. } => Some(*m_star),
            _ => None,
        }
    }
}

/// Root of the decreasing map `m ↦ Λ(m, ∞)` on `[1e-6, bracket_max]`.
pub fn m_star(model: &PatchModel, bracket_max: f64) -> Result<MStar> {
    let c = chi(model);
    let top = limit_m0(model);
    if !(c > 0.0) {
        return Ok(MStar::NotApplicable {
            reason: format!("χ = {c} ≤ 0, no growth for any (m, T)"),
        });
    }
    if !(top < 0.0) {
        return Ok(MStar::NotApplicable {
            reason: "some patch is not a sink".into(),
        });
    }
    let fast = match limit_minf(model) {
        Ok(v) => v,
        Err(Error::Reducible) => {
            return Ok(MStar::NotApplicable {
                reason: "migration is reducible on some segment".into(),
            })
        }
        Err(e) => return Err(e),
    };
    if fast >= 0.0 {
        return Ok(MStar::GrowthForAllM);
    }
    let f = |m: f64| limit_tinf(model, m);
    let mut lo = M_STAR_LO;
    let mut hi = bracket_max;
    let f_hi = f(hi)?;
    if f_hi > 0.0 {
        return Err(Error::BracketFailure { lo, hi });
    }
    if f(lo)? <= 0.0 {
        return Err(Error::BracketFailure { lo, hi });
    }
    let mut mid = 0.5 * (lo + hi);
    let mut f_mid = f(mid)?;
    for _ in 0..M_STAR_MAX_ITER {
        mid = 0.5 * (lo + hi);
        f_mid = f(mid)?;
        if f_mid > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 4.0 * f64::EPSILON * hi {
            break;
        }
    }
    Ok(MStar::Root {
        m_star: mid,
        residual: f_mid.abs(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TwoPatchForms {
    pub lambda_t0: f64,
    pub lambda_tinf: f64,
}

/// Larger root of the 2×2 characteristic polynomial,
/// `½(r₁ + r₂ − m(ℓ₁₂ + ℓ₂₁) + √D)` with
/// `D = (r₁ − r₂ + m(ℓ₁₂ − ℓ₂₁))² + 4m²ℓ₁₂ℓ₂₁`.
pub fn two_patch_root(r1: f64, r2: f64, l12: f64, l21: f64, m: f64) -> f64 {
    let d = (r1 - r2 + m * (l12 - l21)).powi(2) + 4.0 * m * m * l12 * l21;
    0.5 * (r1 + r2 - m * (l12 + l21) + d.sqrt())
}

pub fn two_patch_closed_forms(model: &PatchModel, m: f64) -> Result<TwoPatchForms> {
    if model.n() != 2 {
        return Err(Error::WrongDimension {
            expected: 2,
            found: model.n(),
        });
    }
    check_m(m)?;
    for p in model.pieces() {
        let l = model.migration_in(&p, p.start);
        if l[(0, 1)] <= 0.0 && l[(1, 0)] <= 0.0 {
            return Err(Error::Reducible);
        }
    }
    let r = model.mean_growth();
    let l = model.mean_migration();
    let lambda_t0 = two_patch_root(r[0], r[1], l[(0, 1)], l[(1, 0)], m);
    let lambda_tinf = model.integrate(|p, t| {
        let r = model.growth_in(p, t);
        let l = model.migration_in(p, t);
        two_patch_root(r[0], r[1], l[(0, 1)], l[(1, 0)], m)
    });
    Ok(TwoPatchForms {
        lambda_t0,
        lambda_tinf,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurveCheck {
    pub values: Vec<f64>,
    pub decreasing: bool,
    pub convex: bool,
    /// Largest `f(m_{k+1}) − f(m_k)`.
    pub max_increase: f64,
    /// Smallest change of slope between consecutive grid intervals.
    pub min_slope_change: f64,
    pub flat: bool,
}

fn check_curve(ms: &[f64], values: Vec<f64>) -> CurveCheck {
    let diffs: Vec<f64> = values.windows(2).map(|w| w[1] - w[0]).collect();
    let slopes: Vec<f64> = diffs
        .iter()
        .zip(ms.windows(2))
        .map(|(d, w)| d / (w[1] - w[0]))
        .collect();
    let max_increase = diffs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min_slope_change = slopes
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(f64::INFINITY, f64::min);
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    CurveCheck {
        decreasing: max_increase <= SHAPE_SLACK,
        convex: min_slope_change >= -SHAPE_SLACK,
        max_increase,
        min_slope_change,
        flat: hi - lo <= SHAPE_SLACK,
        values,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvexityReport {
    pub m_grid: Vec<f64>,
    pub t0: CurveCheck,
    pub tinf: CurveCheck,
    /// All `r̄_i` equal within tolerance; `Λ(m, 0)` is then constant.
    pub equal_means: bool,
    /// All `r_i(τ)` equal on every piece; `Λ(m, ∞)` is then constant.
    pub equal_profiles: bool,
}

/// Finite-difference shape of `m ↦ Λ(m, 0)` and `m ↦ Λ(m, ∞)` on a sorted grid.
pub fn convexity_report(model: &PatchModel, m_grid: &[f64]) -> Result<ConvexityReport> {
    if model.validate()?.status != ValidationStatus::IrreducibleEverywhere {
        return Err(Error::Reducible);
    }
    if m_grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidParameter("m grid must be increasing".into()));
    }
    let t0 = m_grid
        .iter()
        .map(|&m| limit_t0(model, m))
        .collect::<Result<Vec<_>>>()?;
    let tinf = m_grid
        .iter()
        .map(|&m| limit_tinf(model, m))
        .collect::<Result<Vec<_>>>()?;
    let r = model.mean_growth();
    let equal_means = r.max() - r.min() < EQUALITY_TOL;
    let equal_profiles = model.pieces().iter().all(|p| {
        let g = model.growth_in(p, p.start);
        let g_end = model.growth_in(p, p.end);
        g.max() - g.min() < EQUALITY_TOL && g_end.max() - g_end.min() < EQUALITY_TOL
    });
    Ok(ConvexityReport {
        m_grid: m_grid.to_vec(),
        t0: check_curve(m_grid, t0),
        tinf: check_curve(m_grid, tinf),
        equal_means,
        equal_profiles,
    })
}

/// Every limit value the model supports; entries that need irreducible
/// migration are `None` when it fails.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LimitPanel {
    pub chi: f64,
    pub mean_growth: Vec<f64>,
    /// `Λ(0, T)` for every `T`.
    pub lambda_0_t: f64,
    /// `Λ(∞, T)` for every `T`.
    pub lambda_inf_t: Option<f64>,
    pub corners: PanelCorners,
    pub m_star: MStar,
    /// `Σ p_i r̄_i` when migration is constant.
    pub infimum: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub m: Option<f64>,
    /// `Λ(m, 0)` at the requested `m`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda_m_0: Option<f64>,
    /// `Λ(m, ∞)` at the requested `m`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda_m_inf: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub two_patch: Option<TwoPatchForms>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PanelCorners {
    pub m0_t0: f64,
    pub minf_t0: Option<f64>,
    pub m0_tinf: f64,
    pub minf_tinf: Option<f64>,
}

pub fn limit_panel(model: &PatchModel, m: Option<f64>) -> Result<LimitPanel> {
    model.validate()?;
    let chi_v = chi(model);
    let minf = limit_minf(model).ok();
    let infimum = if model.has_constant_migration() {
        averaged_kernel(model)
            .ok()
            .map(|p| p.dot(&model.mean_growth()))
    } else {
        None
    };
    let (lambda_m_0, lambda_m_inf, two_patch) = match m {
        Some(m) => (
            Some(limit_t0(model, m)?),
            Some(limit_tinf(model, m)?),
            if model.n() == 2 {
                two_patch_closed_forms(model, m).ok()
            } else {
                None
            },
        ),
        None => (None, None, None),
    };
    Ok(LimitPanel {
        chi: chi_v,
        mean_growth: model.mean_growth().iter().copied().collect(),
        lambda_0_t: limit_m0(model),
        lambda_inf_t: minf,
        corners: PanelCorners {
            m0_t0: limit_m0(model),
            minf_t0: averaged_kernel(model)
                .ok()
                .map(|q| q.dot(&model.mean_growth())),
            m0_tinf: chi_v,
            minf_tinf: minf,
        },
        m_star: m_star(model, M_STAR_HI)?,
        infimum,
        m,
        lambda_m_0,
        lambda_m_inf,
        two_patch,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::builtin;

    #[test]
    fn ab1_chi_and_corners() {
        let m = builtin("ab1").unwrap();
        assert_eq!(chi(&m), 0.5);
        let c = corners(&m).unwrap();
        assert!((c.m0_t0 + 0.25).abs() < 1e-15);
        assert!((c.minf_t0 + 1.0 / 3.0).abs() < 1e-15);
        assert!((c.minf_tinf + 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(c.m0_tinf, 0.5);
    }

    #[test]
    fn pm1_limits() {
        let model = builtin("pm1(0.5)").unwrap();
        for m in [0.1, 1.0, 7.0] {
            assert!((limit_t0(&model, m).unwrap() + 0.5).abs() < 1e-12);
            let expected = -0.5 + (1.0 + m * m).sqrt() - m;
            assert!((limit_tinf(&model, m).unwrap() - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn closed_forms_match_spectral() {
        for name in ["ab1", "ab2s", "abc_two_patch", "unidir_favorable"] {
            let model = builtin(name).unwrap();
            for m in [0.05, 0.5, 3.0] {
                let f = two_patch_closed_forms(&model, m).unwrap();
                assert!((f.lambda_t0 - limit_t0(&model, m).unwrap()).abs() < 1e-12);
                assert!((f.lambda_tinf - limit_tinf(&model, m).unwrap()).abs() < 1e-12);
            }
        }
        let three = builtin("three_patch_circular").unwrap();
        assert!(matches!(
            two_patch_closed_forms(&three, 1.0),
            Err(Error::WrongDimension { .. })
        ));
    }

    #[test]
    fn m_star_cases() {
        let ab1 = builtin("ab1").unwrap();
        let r = m_star(&ab1, M_STAR_HI).unwrap().value().unwrap();
        assert!((r - 5.0 / 9.0).abs() < 1e-10);
        assert_eq!(
            m_star(&builtin("ab_mstar_inf").unwrap(), M_STAR_HI).unwrap(),
            MStar::GrowthForAllM
        );
        assert!(matches!(
            m_star(&builtin("pm1(-0.5)").unwrap(), M_STAR_HI).unwrap(),
            MStar::NotApplicable { .. }
        ));
    }

    #[test]
    fn m_star_bracket_failure() {
        let ab1 = builtin("ab1").unwrap();
        assert!(matches!(
            m_star(&ab1, 0.3),
            Err(Error::BracketFailure { .. })
        ));
    }

    #[test]
    fn symmetric_migration_averages_means() {
        let model = builtin("pm1(0.2)").unwrap();
        let c = corners(&model).unwrap();
        assert!((c.minf_tinf + 0.2).abs() < 1e-15);
    }

    #[test]
    fn ab1_shape() {
        let model = builtin("ab1").unwrap();
        let grid: Vec<f64> = (0..200).map(|k| 0.01 + k as f64 * (20.0 - 0.01) / 199.0).collect();
        let r = convexity_report(&model, &grid).unwrap();
        assert!(r.t0.decreasing && r.t0.convex);
        assert!(r.tinf.decreasing && r.tinf.convex);
        assert!(!r.equal_means);
    }
}
