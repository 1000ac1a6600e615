//! Zero-level tracing of `Λ` on a sweep grid.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::Serialize;

use super::sweep::{sweep, Axis, SweepGrid};
use crate::dynamics::GrowthEvaluator;
use crate::error::{Error, Result};
use crate::model::{ModelParameters, PatchModel, ValidationStatus};

pub const DEFAULT_TOL: f64 = 1e-8;
const MAX_BISECTIONS: usize = 60;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CurvePoint {
    pub m: f64,
    #[serde(rename = "T")]
    pub t: f64,
    pub nu: f64,
    /// `|Λ(m, T)|` at the refined vertex.
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Branch {
    pub points: Vec<CurvePoint>,
    pub closed: bool,
}

impl Branch {
    pub fn m_range(&self) -> (f64, f64) {
        self.points
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p.m), b.max(p.m)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CriticalCurve {
    pub branches: Vec<Branch>,
    /// True for models without irreducible migration, where the curve has no
    /// theoretical backing.
    pub empirical: bool,
    /// Grid cells skipped because a corner had no defined `Λ`.
    pub excluded_cells: usize,
    pub tol: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
enum Edge {
    /// `(i, j)`–`(i + 1, j)`: `m` varies at fixed `T`.
    M(usize, usize),
    /// `(i, j)`–`(i, j + 1)`: `T` varies at fixed `m`.
    T(usize, usize),
}

/// Bisection in log-space on `[lo, hi]` where `f` changes sign.
fn bisect_log(
    mut f: impl FnMut(f64) -> Option<f64>,
    lo: f64,
    hi: f64,
    f_lo: f64,
    tol: f64,
) -> (f64, f64) {
    let (mut a, mut b) = (lo.ln(), hi.ln());
    let pos_lo = f_lo > 0.0;
    let mut best = (lo, f_lo.abs());
    for _ in 0..MAX_BISECTIONS {
        let mid = 0.5 * (a + b);
        let x = mid.exp();
        let Some(v) = f(x) else { break };
        if v.abs() < best.1 || best.0 == lo {
            best = (x, v.abs());
        }
        if v.abs() <= tol {
            break;
        }
        if (v > 0.0) == pos_lo {
            a = mid;
        } else {
            b = mid;
        }
    }
    best
}

fn refine_edge(ev: &GrowthEvaluator, grid: &SweepGrid, edge: Edge, tol: f64) -> CurvePoint {
    let eval = |m: f64, t: f64| ModelParameters::new(m, t).and_then(|p| ev.lambda(&p)).ok();
    let (m, t, residual) = match edge {
        Edge::M(i, j) => {
            let t = grid.t_values[j];
            let (m, r) = bisect_log(
                |m| eval(m, t),
                grid.m_values[i],
                grid.m_values[i + 1],
                grid.lambda[i][j],
                tol,
            );
            (m, t, r)
        }
        Edge::T(i, j) => {
            let m = grid.m_values[i];
            let (t, r) = bisect_log(
                |t| eval(m, t),
                grid.t_values[j],
                grid.t_values[j + 1],
                grid.lambda[i][j],
                tol,
            );
            (m, t, r)
        }
    };
    CurvePoint {
        m,
        t,
        nu: 1.0 / t,
        residual,
    }
}

/// Marching squares on the sign of `Λ`, edge crossings refined by bisection
/// and chained into polylines. Saddle cells are resolved by the value at the
/// cell centre.
pub fn trace_zero_set(model: &PatchModel, grid: &SweepGrid, tol: f64) -> Result<CriticalCurve> {
    let ev = GrowthEvaluator::new(model)?;
    let (nm, nt) = (grid.m_values.len(), grid.t_values.len());
    let ok = |i: usize, j: usize| grid.status[i][j].is_ok();
    let pos = |i: usize, j: usize| grid.lambda[i][j] > 0.0;

    let mut cells = Vec::new();
    let mut excluded = 0;
    for i in 0..nm.saturating_sub(1) {
        for j in 0..nt.saturating_sub(1) {
            if !(ok(i, j) && ok(i + 1, j) && ok(i + 1, j + 1) && ok(i, j + 1)) {
                excluded += 1;
                continue;
            }
            let s = [pos(i, j), pos(i + 1, j), pos(i + 1, j + 1), pos(i, j + 1)];
            if s.iter().all(|&b| b == s[0]) {
                continue;
            }
            cells.push((i, j, s));
        }
    }

    // Saddle centres are evaluated in parallel before pairing.
    let saddles: Vec<(usize, usize)> = cells
        .iter()
        .filter(|(_, _, s)| s[0] == s[2] && s[1] == s[3] && s[0] != s[1])
        .map(|&(i, j, _)| (i, j))
        .collect();
    let centre: HashMap<(usize, usize), bool> = saddles
        .par_iter()
        .map(|&(i, j)| {
            let m = (grid.m_values[i] * grid.m_values[i + 1]).sqrt();
            let t = (grid.t_values[j] * grid.t_values[j + 1]).sqrt();
            let v = ModelParameters::new(m, t)
                .and_then(|p| ev.lambda(&p))
                .unwrap_or(f64::NAN);
            ((i, j), v > 0.0)
        })
        .collect();

    let mut segments: Vec<(Edge, Edge)> = Vec::new();
    for &(i, j, s) in &cells {
        let e = [Edge::M(i, j), Edge::T(i + 1, j), Edge::M(i, j + 1), Edge::T(i, j)];
        let crossing: Vec<Edge> = (0..4)
            .filter(|&k| s[k] != s[(k + 1) % 4])
            .map(|k| e[k])
            .collect();
        match crossing.len() {
            2 => segments.push((crossing[0], crossing[1])),
            4 => {
                if centre[&(i, j)] == s[0] {
                    // corners 0 and 2 joined through the centre
                    segments.push((e[0], e[1]));
                    segments.push((e[2], e[3]));
                } else {
                    segments.push((e[3], e[0]));
                    segments.push((e[1], e[2]));
                }
            }
            _ => unreachable!("a cell has an even number of sign changes"),
        }
    }
    if segments.is_empty() {
        return Err(Error::NoZeroCrossing);
    }

    let mut edges: Vec<Edge> = segments.iter().flat_map(|&(a, b)| [a, b]).collect();
    edges.sort();
    edges.dedup();
    let refined: HashMap<Edge, CurvePoint> = edges
        .par_iter()
        .map(|&e| (e, refine_edge(&ev, grid, e, tol)))
        .collect();

    let mut adjacency: HashMap<Edge, Vec<usize>> = HashMap::new();
    for (k, &(a, b)) in segments.iter().enumerate() {
        adjacency.entry(a).or_default().push(k);
        adjacency.entry(b).or_default().push(k);
    }
    let mut used = vec![false; segments.len()];
    let mut branches = Vec::new();
    let mut starts: Vec<Edge> = edges
        .iter()
        .copied()
        .filter(|e| adjacency[e].len() == 1)
        .collect();
    starts.extend(edges.iter().copied());
    for start in starts {
        let Some(&first) = adjacency[&start].iter().find(|&&k| !used[k]) else {
            continue;
        };
        let mut chain = vec![start];
        let mut current = start;
        let mut seg = first;
        loop {
            used[seg] = true;
            let (a, b) = segments[seg];
            let next = if a == current { b } else { a };
            chain.push(next);
            current = next;
            match adjacency[&current].iter().find(|&&k| !used[k]) {
                Some(&k) => seg = k,
                None => break,
            }
        }
        let closed = chain.len() > 2 && chain.first() == chain.last();
        let mut points: Vec<CurvePoint> = chain.iter().map(|e| refined[e]).collect();
        if closed {
            points.pop();
            let k = points
                .iter()
                .enumerate()
                .min_by(|a, b| a.1.m.total_cmp(&b.1.m))
                .map(|(k, _)| k)
                .unwrap_or(0);
            points.rotate_left(k);
        } else if points.first().map(|p| p.m) > points.last().map(|p| p.m) {
            points.reverse();
        }
        branches.push(Branch { points, closed });
    }
    branches.sort_by(|a, b| {
        a.points[0]
            .m
            .total_cmp(&b.points[0].m)
            .then(a.points[0].t.total_cmp(&b.points[0].t))
    });
    Ok(CriticalCurve {
        branches,
        empirical: ev.status != ValidationStatus::IrreducibleEverywhere,
        excluded_cells: excluded,
        tol,
    })
}

/// Sweeps the lattice and traces `Λ = 0`.
pub fn critical_curve(
    model: &PatchModel,
    m_axis: Axis,
    t_axis: Axis,
    tol: f64,
) -> Result<CriticalCurve> {
    let grid = sweep(model, m_axis, t_axis)?;
    trace_zero_set(model, &grid, tol)
}

/// Smallest `T` in `[t_lo, t_hi]` above which `Λ(m, ·) > 0`, located on a
/// 200-point log ladder and refined by bisection.
pub fn critical_period(model: &PatchModel, m: f64, t_lo: f64, t_hi: f64) -> Result<f64> {
    let ev = GrowthEvaluator::new(model)?;
    let ts = Axis::log(t_lo, t_hi, 200);
    ts.check()?;
    let ts = ts.values();
    let vals = ts
        .iter()
        .map(|&t| ev.lambda(&ModelParameters::new(m, t)?))
        .collect::<Result<Vec<_>>>()?;
    let k = (0..ts.len() - 1)
        .find(|&k| vals[k] <= 0.0 && vals[k + 1] > 0.0)
        .ok_or(Error::NoZeroCrossing)?;
    let (t, _) = bisect_log(
        |t| ModelParameters::new(m, t).and_then(|p| ev.lambda(&p)).ok(),
        ts[k],
        ts[k + 1],
        vals[k],
        1e-12,
    );
    Ok(t)
}

/// Largest-`m` point of a branch, refined by golden-section search over
/// `log T` of the `m`-crossing near the coarse maximum. Returns `(m, T)`.
pub fn branch_tip(model: &PatchModel, branch: &Branch) -> Result<(f64, f64)> {
    let ev = GrowthEvaluator::new(model)?;
    let tip = branch
        .points
        .iter()
        .max_by(|a, b| a.m.total_cmp(&b.m))
        .ok_or(Error::NoZeroCrossing)?;
    let eval = |m: f64, t: f64| ModelParameters::new(m, t).and_then(|p| ev.lambda(&p)).ok();
    let crossing = |log_t: f64| -> f64 {
        let t = log_t.exp();
        let (lo, hi) = (tip.m / 1.3, tip.m * 1.3);
        match (eval(lo, t), eval(hi, t)) {
            (Some(a), Some(b)) if (a > 0.0) != (b > 0.0) => {
                bisect_log(|m| eval(m, t), lo, hi, a, 1e-13).0
            }
            _ => f64::NEG_INFINITY,
        }
    };
    // bracket: a few neighbouring T-spacings around the coarse tip
    let spacing = branch
        .points
        .windows(2)
        .map(|w| (w[1].t.ln() - w[0].t.ln()).abs())
        .fold(0.0, f64::max)
        .max(0.05);
    let (mut a, mut b) = (tip.t.ln() - 2.0 * spacing, tip.t.ln() + 2.0 * spacing);
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = b - g * (b - a);
    let mut x2 = a + g * (b - a);
    let mut f1 = crossing(x1);
    let mut f2 = crossing(x2);
    for _ in 0..60 {
        if f1 < f2 {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + g * (b - a);
            f2 = crossing(x2);
        } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - g * (b - a);
            f1 = crossing(x1);
        }
        if b - a < 1e-9 {
            break;
        }
    }
    let (x, f) = if f1 > f2 { (x1, f1) } else { (x2, f2) };
    if f.is_finite() && f >= tip.m {
        Ok((f, x.exp()))
    } else {
        Ok((tip.m, tip.t))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::builtin;

    #[test]
    fn ab1_single_branch_below_m_star() {
        let model = builtin("ab1").unwrap();
        let c = critical_curve(&model, Axis::log(0.01, 2.0, 40), Axis::log(0.1, 1000.0, 40), DEFAULT_TOL)
            .unwrap();
        assert_eq!(c.branches.len(), 1);
        assert!(!c.empirical);
        let (lo, hi) = c.branches[0].m_range();
        assert!(lo > 0.0 && hi < 5.0 / 9.0);
        for p in &c.branches[0].points {
            assert!(p.residual <= DEFAULT_TOL, "{p:?}");
            assert_eq!(p.nu, 1.0 / p.t);
        }
    }

    #[test]
    fn no_crossing_for_all_negative() {
        let model = builtin("pm1(1.5)").unwrap();
        assert_eq!(
            critical_curve(&model, Axis::log(0.1, 1.0, 6), Axis::log(0.1, 10.0, 6), DEFAULT_TOL),
            Err(Error::NoZeroCrossing)
        );
    }

    #[test]
    fn critical_period_brackets_sign_change() {
        let model = builtin("ab1").unwrap();
        let tc = critical_period(&model, 0.3, 0.01, 1e6).unwrap();
        let ev = GrowthEvaluator::new(&model).unwrap();
        let below = ev.lambda(&ModelParameters::new(0.3, tc * 0.99).unwrap()).unwrap();
        let above = ev.lambda(&ModelParameters::new(0.3, tc * 1.01).unwrap()).unwrap();
        assert!(below < 0.0 && above > 0.0);
    }
}
