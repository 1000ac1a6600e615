//! Tabular data behind each reference figure, keyed by figure id.

use serde::Serialize;

use super::classify::empirical_summary;
use super::contour::{branch_tip, trace_zero_set, CriticalCurve, DEFAULT_TOL};
use super::sweep::{sweep, Axis, SweepGrid};
use crate::asymptotics::{limit_panel, limit_t0, limit_tinf};
use crate::catalog::builtin;
use crate::dynamics::{simplex, simplex_trajectory, GrowthEvaluator};
use crate::error::{Error, Result};
use crate::model::{ModelParameters, PatchModel};

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Value {
    Num(f64),
    Text(String),
}

impl From<f64> for Value {
    fn from(v: f64) -> Self {
        Value::Num(v)
    }
}

impl From<usize> for Value {
    fn from(v: usize) -> Self {
        Value::Num(v as f64)
    }
}

impl From<&str> for Value {
    fn from(v: &str) -> Self {
        Value::Text(v.to_string())
    }
}

impl From<String> for Value {
    fn from(v: String) -> Self {
        Value::Text(v)
    }
}

impl From<bool> for Value {
    fn from(v: bool) -> Self {
        Value::Text(v.to_string())
    }
}

impl From<Option<f64>> for Value {
    fn from(v: Option<f64>) -> Self {
        Value::Num(v.unwrap_or(f64::NAN))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Table {
    pub name: String,
    pub headers: Vec<String>,
    pub rows: Vec<Vec<Value>>,
}

impl Table {
    fn new(name: impl Into<String>, headers: &[&str]) -> Self {
        Self {
            name: name.into(),
            headers: headers.iter().map(|h| h.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    fn push(&mut self, row: Vec<Value>) {
        debug_assert_eq!(row.len(), self.headers.len());
        self.rows.push(row);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FigureOptions {
    /// Points per axis for `(m, T)` grids.
    pub resolution: usize,
}

impl Default for FigureOptions {
    fn default() -> Self {
        Self { resolution: 128 }
    }
}

pub trait FigureRecipe: Send + Sync {
    fn id(&self) -> &'static str;
    /// Other ids that resolve to the same data.
    fn aliases(&self) -> &'static [&'static str] {
        &[]
    }
    fn description(&self) -> &'static str;
    fn build(&self, opts: &FigureOptions) -> Result<Vec<Table>>;
}

struct Recipe {
    id: &'static str,
    aliases: &'static [&'static str],
    description: &'static str,
    build: fn(&FigureOptions) -> Result<Vec<Table>>,
}

impl FigureRecipe for Recipe {
    fn id(&self) -> &'static str {
        self.id
    }
    fn aliases(&self) -> &'static [&'static str] {
        self.aliases
    }
    fn description(&self) -> &'static str {
        self.description
    }
    fn build(&self, opts: &FigureOptions) -> Result<Vec<Table>> {
        (self.build)(opts)
    }
}

pub fn figure_registry() -> Vec<Box<dyn FigureRecipe>> {
    let r = |id, aliases, description, build| -> Box<dyn FigureRecipe> {
        Box::new(Recipe {
            id,
            aliases,
            description,
            build,
        })
    };
    vec![
        r("fig2", &[], "ab1: Λ grid, zero set, m- and T-slices, limits", fig2),
        r("fig5", &[], "growth sets in the (m, ν) plane for ab1, ab2s, ab_mstar_inf", fig5),
        r("fig7", &[], "abc_two_patch: Λ grid", fig7),
        r("fig9", &[], "abc_two_patch: zero set in (m, T) and (m, ν)", fig9),
        r("fig11", &[], "fainshil: growth band, m* and m**", fig11),
        r("fig16", &[], "three_patch_reducible: empirical growth across b", fig16),
        r("fig17", &[], "unidirectional migration: Λ grids", fig17),
        r("S1", &["fig6"], "three_patch_circular: grid, zero set, slices, limits", s1),
        r("S2", &["fig3"], "ab2s: grid, zero set, slices, limits", s2),
        r("S3", &["fig4"], "ab_mstar_inf: grid, zero set, slices, limits", s3),
        r("S4", &["fig8"], "abc_two_patch: m- and T-slices", s4),
        r("S5", &["fig10"], "fainshil: Λ grid and slices", s5),
        r("S6", &["fig12"], "three_patch_circular, m = 1, T = 20: θ against v(τ)", s6),
    ]
}

pub fn reproduce(id: &str, opts: &FigureOptions) -> Result<Vec<Table>> {
    let registry = figure_registry();
    let recipe = registry
        .iter()
        .find(|r| r.id().eq_ignore_ascii_case(id) || r.aliases().iter().any(|a| a.eq_ignore_ascii_case(id)))
        .ok_or_else(|| Error::UnknownFigure(id.to_string()))?;
    if opts.resolution < 2 {
        return Err(Error::InvalidParameter("resolution must be at least 2".into()));
    }
    recipe.build(opts)
}

fn grid_table(name: &str, grid: &SweepGrid) -> Table {
    let mut t = Table::new(name, &["m", "T", "lambda", "status"]);
    for (i, &m) in grid.m_values.iter().enumerate() {
        for (j, &tv) in grid.t_values.iter().enumerate() {
            t.push(vec![
                m.into(),
                tv.into(),
                grid.lambda[i][j].into(),
                grid.status[i][j].label().into(),
            ]);
        }
    }
    t
}

fn curve_table(name: &str, curve: &CriticalCurve) -> Table {
    let mut t = Table::new(name, &["branch", "m", "T", "nu", "lambda_residual"]);
    for (b, branch) in curve.branches.iter().enumerate() {
        for p in &branch.points {
            t.push(vec![b.into(), p.m.into(), p.t.into(), p.nu.into(), p.residual.into()]);
        }
    }
    t
}

/// `Λ` along lines of fixed `T` (varying `m`) with the `T → 0, ∞` limits.
fn m_slices(model: &PatchModel, name: &str, periods: &[f64], m_axis: Axis) -> Result<Table> {
    let ev = GrowthEvaluator::new(model)?;
    let mut t = Table::new(name, &["T", "m", "lambda", "lambda_t0", "lambda_tinf"]);
    for &period in periods {
        for m in m_axis.values() {
            let v = ModelParameters::new(m, period).and_then(|p| ev.lambda(&p)).ok();
            t.push(vec![
                period.into(),
                m.into(),
                v.into(),
                limit_t0(model, m).ok().into(),
                limit_tinf(model, m).ok().into(),
            ]);
        }
    }
    Ok(t)
}

/// `Λ` along lines of fixed `m` (varying `T`).
fn t_slices(model: &PatchModel, name: &str, ms: &[f64], t_axis: Axis) -> Result<Table> {
    let ev = GrowthEvaluator::new(model)?;
    let mut t = Table::new(name, &["m", "T", "lambda"]);
    for &m in ms {
        for period in t_axis.values() {
            let v = ModelParameters::new(m, period).and_then(|p| ev.lambda(&p)).ok();
            t.push(vec![m.into(), period.into(), v.into()]);
        }
    }
    Ok(t)
}

fn limits_table(model: &PatchModel, name: &str) -> Result<Table> {
    let p = limit_panel(model, None)?;
    let mut t = Table::new(name, &["quantity", "value"]);
    t.push(vec!["chi".into(), p.chi.into()]);
    for (k, r) in p.mean_growth.iter().enumerate() {
        t.push(vec![format!("mean_growth_{}", k + 1).into(), (*r).into()]);
    }
    t.push(vec!["m0_t0".into(), p.corners.m0_t0.into()]);
    t.push(vec!["minf_t0".into(), p.corners.minf_t0.into()]);
    t.push(vec!["m0_tinf".into(), p.corners.m0_tinf.into()]);
    t.push(vec!["minf_tinf".into(), p.corners.minf_tinf.into()]);
    t.push(vec!["m_star".into(), p.m_star.value().into()]);
    Ok(t)
}

fn grid_and_curve(
    model: &PatchModel,
    prefix: &str,
    m_range: (f64, f64),
    t_range: (f64, f64),
    opts: &FigureOptions,
) -> Result<(Vec<Table>, Option<CriticalCurve>)> {
    let n = opts.resolution;
    let grid = sweep(model, Axis::log(m_range.0, m_range.1, n), Axis::log(t_range.0, t_range.1, n))?;
    let mut tables = vec![grid_table(&format!("{prefix}_grid"), &grid)];
    let curve = match trace_zero_set(model, &grid, DEFAULT_TOL) {
        Ok(c) => {
            tables.push(curve_table(&format!("{prefix}_curve"), &c));
            Some(c)
        }
        Err(Error::NoZeroCrossing) => None,
        Err(e) => return Err(e),
    };
    Ok((tables, curve))
}

#[allow(clippy::too_many_arguments)]
fn full_panel(
    spec: &str,
    prefix: &str,
    m_range: (f64, f64),
    t_range: (f64, f64),
    periods: &[f64],
    ms: &[f64],
    opts: &FigureOptions,
) -> Result<Vec<Table>> {
    let model = builtin(spec)?;
    let (mut tables, _) = grid_and_curve(&model, prefix, m_range, t_range, opts)?;
    let n = opts.resolution;
    tables.push(m_slices(&model, &format!("{prefix}_m_slices"), periods, Axis::log(m_range.0, m_range.1, n))?);
    tables.push(t_slices(&model, &format!("{prefix}_t_slices"), ms, Axis::log(t_range.0, t_range.1, n))?);
    tables.push(limits_table(&model, &format!("{prefix}_limits"))?);
    Ok(tables)
}

fn fig2(opts: &FigureOptions) -> Result<Vec<Table>> {
    full_panel(
        "ab1",
        "fig2",
        (0.01, 3.0),
        (0.1, 100.0),
        &[1.0, 5.0, 10.0, 20.0, 50.0, 100.0],
        &[0.05, 0.1, 0.3, 0.5, 1.0, 2.0],
        opts,
    )
}

fn fig5(opts: &FigureOptions) -> Result<Vec<Table>> {
    let mut tables = Vec::new();
    for spec in ["ab1", "ab2s", "ab_mstar_inf"] {
        let model = builtin(spec)?;
        let (mut t, _) = grid_and_curve(&model, &format!("fig5_{spec}"), (0.01, 10.0), (0.01, 1000.0), opts)?;
        // the ν-plane only needs the zero set; the grid is the T-mirror of it
        tables.extend(t.drain(1..));
    }
    Ok(tables)
}

fn fig7(opts: &FigureOptions) -> Result<Vec<Table>> {
    let model = builtin("abc_two_patch")?;
    let n = opts.resolution;
    let grid = sweep(&model, Axis::log(0.01, 10.0, n), Axis::log(0.1, 100.0, n))?;
    Ok(vec![grid_table("fig7_grid", &grid)])
}

fn fig9(opts: &FigureOptions) -> Result<Vec<Table>> {
    let model = builtin("abc_two_patch")?;
    let (mut tables, _) = grid_and_curve(&model, "fig9", (0.01, 100.0), (0.01, 1000.0), opts)?;
    tables.remove(0);
    tables.push(limits_table(&model, "fig9_limits")?);
    Ok(tables)
}

/// `m**`: the largest `m` with growth, at the tip of the upper branch.
pub(crate) fn band_tip(model: &PatchModel, curve: &CriticalCurve) -> Result<(f64, f64)> {
    let branch = curve
        .branches
        .iter()
        .max_by(|a, b| a.m_range().1.total_cmp(&b.m_range().1))
        .ok_or(Error::NoZeroCrossing)?;
    branch_tip(model, branch)
}

fn fig11(opts: &FigureOptions) -> Result<Vec<Table>> {
    let model = builtin("fainshil")?;
    let (mut tables, curve) = grid_and_curve(&model, "fig11", (0.01, 100.0), (0.01, 1000.0), opts)?;
    tables.remove(0);
    let curve = curve.ok_or(Error::NoZeroCrossing)?;
    let (m2, t2) = band_tip(&model, &curve)?;
    let mut t = Table::new("fig11_thresholds", &["quantity", "m", "T"]);
    let p = limit_panel(&model, None)?;
    t.push(vec!["m_star".into(), p.m_star.value().into(), f64::INFINITY.into()]);
    t.push(vec!["m_star_star".into(), m2.into(), t2.into()]);
    tables.push(t);
    Ok(tables)
}

pub(crate) const FIG16_B: [f64; 8] = [-1.2, -1.1, -1.0, -0.9, -0.8, -0.7, -0.6, -0.55];

fn fig16(opts: &FigureOptions) -> Result<Vec<Table>> {
    let res = opts.resolution.min(64);
    let mut t = Table::new(
        "fig16_b_scan",
        &["a", "b", "growth_found", "positive_cells", "evaluated_cells", "excluded_cells", "max_lambda"],
    );
    for b in FIG16_B {
        let model = builtin(&format!("three_patch_reducible(1,{b})"))?;
        let s = empirical_summary(&model, res)?;
        t.push(vec![
            1.0.into(),
            b.into(),
            s.growth_found.into(),
            s.positive_cells.into(),
            s.evaluated_cells.into(),
            s.excluded_cells.into(),
            s.max_lambda.into(),
        ]);
    }
    Ok(vec![t])
}

fn fig17(opts: &FigureOptions) -> Result<Vec<Table>> {
    let mut tables = Vec::new();
    for spec in ["unidir_favorable", "unidir_unfavorable"] {
        let model = builtin(spec)?;
        let (t, _) = grid_and_curve(&model, &format!("fig17_{spec}"), (0.01, 100.0), (0.01, 1000.0), opts)?;
        tables.extend(t);
    }
    Ok(tables)
}

fn s1(opts: &FigureOptions) -> Result<Vec<Table>> {
    full_panel(
        "three_patch_circular",
        "S1",
        (0.01, 1.0),
        (0.1, 1000.0),
        &[1.0, 10.0, 100.0, 1000.0],
        &[0.01, 0.05, 0.1, 0.172, 0.3],
        opts,
    )
}

fn s2(opts: &FigureOptions) -> Result<Vec<Table>> {
    full_panel(
        "ab2s",
        "S2",
        (0.01, 3.0),
        (0.1, 100.0),
        &[1.0, 5.0, 10.0, 50.0, 100.0],
        &[0.05, 0.1, 0.3, 1.0, 3.0],
        opts,
    )
}

fn s3(opts: &FigureOptions) -> Result<Vec<Table>> {
    full_panel(
        "ab_mstar_inf",
        "S3",
        (0.01, 10.0),
        (0.1, 100.0),
        &[1.0, 5.0, 10.0, 50.0, 100.0],
        &[0.05, 0.3, 1.0, 3.0, 10.0],
        opts,
    )
}

fn s4(opts: &FigureOptions) -> Result<Vec<Table>> {
    let model = builtin("abc_two_patch")?;
    let n = opts.resolution;
    Ok(vec![
        m_slices(&model, "S4_m_slices", &[1.0, 5.0, 10.0, 50.0, 100.0], Axis::log(0.01, 10.0, n))?,
        t_slices(&model, "S4_t_slices", &[0.5, 1.0, 1.764, 2.0, 3.0], Axis::log(0.1, 100.0, n))?,
    ])
}

fn s5(opts: &FigureOptions) -> Result<Vec<Table>> {
    let model = builtin("fainshil")?;
    let n = opts.resolution;
    let grid = sweep(&model, Axis::log(0.01, 10.0, n), Axis::log(0.01, 100.0, n))?;
    Ok(vec![
        grid_table("S5_grid", &grid),
        m_slices(&model, "S5_m_slices", &[0.5, 1.0, 2.0, 10.0], Axis::log(0.01, 10.0, n))?,
        t_slices(&model, "S5_t_slices", &[0.5, 1.0, 1.5], Axis::log(0.01, 100.0, n))?,
    ])
}

fn s6(opts: &FigureOptions) -> Result<Vec<Table>> {
    let model = builtin("three_patch_circular")?;
    let params = ModelParameters::new(1.0, 20.0)?;
    let resolution = opts.resolution.max(simplex::DEFAULT_RESOLUTION);
    let traj = simplex_trajectory(&model, &params, &[0.3, 0.35, 0.35], 2, resolution)?;
    let pieces = model.pieces();
    let slow: Vec<_> = pieces
        .iter()
        .map(|p| simplex::slow_vector(&model, params.m, p, p.start))
        .collect::<Result<_>>()?;
    let n = model.n();
    let mut headers = vec!["tau".to_string()];
    headers.extend((1..=n).map(|i| format!("theta_{i}")));
    headers.extend((1..=n).map(|i| format!("v_{i}")));
    let mut t = Table {
        name: "S6_trajectory".into(),
        headers,
        rows: Vec::new(),
    };
    for (time, theta) in traj.times.iter().zip(&traj.states) {
        let tau = time / params.period;
        let phase = tau.rem_euclid(1.0);
        let k = pieces.iter().rposition(|p| p.start <= phase).unwrap_or(0);
        let mut row: Vec<Value> = vec![tau.into()];
        row.extend(theta.iter().map(|&v| Value::Num(v)));
        row.extend(slow[k].iter().map(|&v| Value::Num(v)));
        t.rows.push(row);
    }
    Ok(vec![t])
}
