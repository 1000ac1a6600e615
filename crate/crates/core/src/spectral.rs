//! Spectral primitives for small dense Metzler and positive matrices.
//!
//! Everything here works on `nalgebra::DMatrix<f64>` and is sized for the
//! handful-of-patches regime (n up to ~10): dense operations, no sparsity.

use nalgebra::{Complex, DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};

/// Off-diagonal entries at or below this value are structural zeros.
pub const PATTERN_THRESHOLD: f64 = 1e-14;

pub const DEFAULT_TOL: f64 = 1e-12;
pub const DEFAULT_MAX_ITER: usize = 100_000;

/// Dominant eigenpair of a positive (or shifted Metzler) matrix.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PerronPair {
    pub root: f64,
    /// Strictly positive, entries sum to one.
    pub vector: DVector<f64>,
    /// `‖A v − root·v‖_∞ / (root ‖v‖_∞)`, measured after balancing.
    pub residual: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct PerronOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub dense_fallback: bool,
}

impl Default for PerronOptions {
    fn default() -> Self {
        Self {
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
            dense_fallback: true,
        }
    }
}

impl PerronOptions {
    pub fn with_tol(tol: f64) -> Self {
        Self {
            tol,
            ..Self::default()
        }
    }
}

/// A matrix stored as `exp(log_scale) * matrix`, used for products whose
/// entries would otherwise overflow or underflow over long periods.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaledMatrix {
    pub log_scale: f64,
    pub matrix: DMatrix<f64>,
}

impl ScaledMatrix {
    pub fn identity(n: usize) -> Self {
        Self {
            log_scale: 0.0,
            matrix: DMatrix::identity(n, n),
        }
    }

    /// Returns `self * rhs` (apply `rhs` first).
    pub fn then_left(&self, lhs: &ScaledMatrix) -> ScaledMatrix {
        let mut out = ScaledMatrix {
            log_scale: self.log_scale + lhs.log_scale,
            matrix: &lhs.matrix * &self.matrix,
        };
        out.normalize();
        out
    }

    /// Rescales so that the largest absolute entry is one.
    pub fn normalize(&mut self) {
        let max = self.matrix.amax();
        if max > 0.0 && max.is_finite() {
            self.matrix /= max;
            self.log_scale += max.ln();
        }
    }

    /// Materializes the matrix; may overflow to infinity.
    pub fn to_matrix(&self) -> DMatrix<f64> {
        &self.matrix * self.log_scale.exp()
    }

    pub fn nrows(&self) -> usize {
        self.matrix.nrows()
    }
}

// Padé coefficients and θ_m thresholds from Higham's scaling-and-squaring method.
const PADE3: [f64; 4] = [120.0, 60.0, 12.0, 1.0];
const PADE5: [f64; 6] = [30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0];
const PADE7: [f64; 8] = [
    17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0,
];
const PADE9: [f64; 10] = [
    17643225600.0,
    8821612800.0,
    2075673600.0,
    302702400.0,
    30270240.0,
    2162160.0,
    110880.0,
    3960.0,
    90.0,
    1.0,
];
const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];
const THETA: [(f64, usize); 4] = [
    (1.495585217958292e-2, 3),
    (2.53939833006323e-1, 5),
    (9.504178996162932e-1, 7),
    (2.097847961257068e0, 9),
];
const THETA13: f64 = 5.371920351148152;

fn norm1(a: &DMatrix<f64>) -> f64 {
    a.column_iter()
        .map(|c| c.iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

fn pade_low(a: &DMatrix<f64>, b: &[f64]) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = a.nrows();
    let a2 = a * a;
    let mut u = DMatrix::<f64>::identity(n, n) * b[1];
    let mut v = DMatrix::<f64>::identity(n, n) * b[0];
    let mut power = DMatrix::<f64>::identity(n, n);
    for k in (2..b.len()).step_by(2) {
        power = &power * &a2;
        v += &power * b[k];
        if k + 1 < b.len() {
            u += &power * b[k + 1];
        }
    }
    (a * u, v)
}

fn pade13(a: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = a.nrows();
    let b = &PADE13;
    let id = DMatrix::<f64>::identity(n, n);
    let a2 = a * a;
    let a4 = &a2 * &a2;
    let a6 = &a2 * &a4;
    let inner_u = &a6 * b[13] + &a4 * b[11] + &a2 * b[9];
    let u = a * (&a6 * inner_u + &a6 * b[7] + &a4 * b[5] + &a2 * b[3] + &id * b[1]);
    let inner_v = &a6 * b[12] + &a4 * b[10] + &a2 * b[8];
    let v = &a6 * inner_v + &a6 * b[6] + &a4 * b[4] + &a2 * b[2] + &id * b[0];
    (u, v)
}

/// `e^{tM}` by scaling and squaring with a Padé approximant of degree 3–13.
pub fn expm(m: &DMatrix<f64>, t: f64) -> Result<DMatrix<f64>> {
    assert!(m.is_square(), "expm needs a square matrix");
    if !t.is_finite() || m.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidParameter("non-finite input to expm".into()));
    }
    let n = m.nrows();
    if n == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    let a = m * t;
    let norm = norm1(&a);
    if norm == 0.0 {
        return Ok(DMatrix::identity(n, n));
    }

    let (u, v, squarings) = match THETA.iter().find(|(theta, _)| norm <= *theta) {
        Some(&(_, 3)) => {
            let (u, v) = pade_low(&a, &PADE3);
            (u, v, 0)
        }
        Some(&(_, 5)) => {
            let (u, v) = pade_low(&a, &PADE5);
            (u, v, 0)
        }
        Some(&(_, 7)) => {
            let (u, v) = pade_low(&a, &PADE7);
            (u, v, 0)
        }
        Some(_) => {
            let (u, v) = pade_low(&a, &PADE9);
            (u, v, 0)
        }
        None => {
            let s = if norm > THETA13 {
                (norm / THETA13).log2().ceil().max(0.0) as i32
            } else {
                0
            };
            let scaled = &a / 2f64.powi(s);
            let (u, v) = pade13(&scaled);
            (u, v, s)
        }
    };

    let p = &v + &u;
    let q = &v - &u;
    let mut r = q
        .lu()
        .solve(&p)
        .ok_or_else(|| Error::IntegrationFailure("singular Padé denominator".into()))?;
    for _ in 0..squarings {
        r = &r * &r;
    }
    if r.iter().any(|x| !x.is_finite()) {
        return Err(Error::Overflow);
    }
    Ok(r)
}

/// `e^{tM}` in log-scaled form. The exponent is shifted by the spectral
/// abscissa so the dominant mode stays of order one even when `t` is large.
pub fn expm_scaled(m: &DMatrix<f64>, t: f64) -> Result<ScaledMatrix> {
    let n = m.nrows();
    let mut shift = dense_spectral_abscissa(m);
    if !shift.is_finite() {
        // column log-norm: keeps ‖e^{t(M − shift)}‖₁ ≤ 1
        shift = (0..n)
            .map(|j| {
                m[(j, j)]
                    + (0..n)
                        .filter(|&i| i != j)
                        .map(|i| m[(i, j)].abs())
                        .sum::<f64>()
            })
            .fold(f64::NEG_INFINITY, f64::max);
    }
    let shifted = m - DMatrix::identity(n, n) * shift;
    let mut out = ScaledMatrix {
        log_scale: shift * t,
        matrix: expm(&shifted, t)?,
    };
    out.normalize();
    Ok(out)
}

pub fn is_metzler(a: &DMatrix<f64>) -> bool {
    let n = a.nrows();
    (0..n).all(|i| (0..n).all(|j| i == j || a[(i, j)] >= 0.0))
}

/// Strong connectivity of the directed graph with an edge j→i whenever
/// `a[(i, j)] > threshold`, i ≠ j.
pub fn is_irreducible_with(a: &DMatrix<f64>, threshold: f64) -> bool {
    let n = a.nrows();
    if n <= 1 {
        return true;
    }
    let reach = |forward: bool| {
        let mut seen = vec![false; n];
        let mut stack = vec![0usize];
        seen[0] = true;
        while let Some(k) = stack.pop() {
            for other in 0..n {
                if other == k || seen[other] {
                    continue;
                }
                let w = if forward { a[(other, k)] } else { a[(k, other)] };
                if w > threshold {
                    seen[other] = true;
                    stack.push(other);
                }
            }
        }
        seen.into_iter().all(|s| s)
    };
    reach(true) && reach(false)
}

pub fn is_irreducible(a: &DMatrix<f64>) -> bool {
    is_irreducible_with(a, PATTERN_THRESHOLD)
}

/// All eigenvalues from a dense real Schur decomposition.
pub fn eigenvalues(a: &DMatrix<f64>) -> Vec<Complex<f64>> {
    a.clone().complex_eigenvalues().iter().copied().collect()
}

/// Largest real part among the eigenvalues of `a`.
pub fn dense_spectral_abscissa(a: &DMatrix<f64>) -> f64 {
    eigenvalues(a)
        .into_iter()
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Largest modulus among the eigenvalues of `a`.
pub fn dense_spectral_radius(a: &DMatrix<f64>) -> f64 {
    eigenvalues(a)
        .into_iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

fn null_vector(a: &DMatrix<f64>, root: f64) -> DVector<f64> {
    let n = a.nrows();
    let shifted = a - DMatrix::identity(n, n) * root;
    let svd = shifted.svd(false, true);
    let v_t = svd.v_t.expect("requested V^T");
    let (k, _) = svd
        .singular_values
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (k, &s)| if s < acc.1 { (k, s) } else { acc });
    let row = v_t.row(k).transpose();
    let mut v = row.map(|x| x.abs());
    let s = v.sum();
    if s > 0.0 {
        v /= s;
    }
    v
}

fn finish_pair(x: &DMatrix<f64>, v: DVector<f64>, root_hint: Option<f64>) -> PerronPair {
    let xv = x * &v;
    let root = root_hint.unwrap_or_else(|| xv.sum() / v.sum());
    let residual = relative_residual(&xv, &v, root);
    PerronPair {
        root,
        vector: v,
        residual,
    }
}

fn relative_residual(xv: &DVector<f64>, v: &DVector<f64>, root: f64) -> f64 {
    let denom = root.abs() * v.amax();
    let r = (xv - v * root).amax();
    if denom > 0.0 {
        r / denom
    } else {
        r
    }
}

/// Parlett-Reinsch balancing with power-of-two factors: returns `(b, d)` with
/// `b = D⁻¹ x D`, so the spectrum is unchanged and eigenvectors map back as
/// `v = D w`. Makes entries spanning hundreds of orders of magnitude usable.
fn balance(x: &DMatrix<f64>) -> (DMatrix<f64>, DVector<f64>) {
    let n = x.nrows();
    let mut b = x.clone();
    let mut d = DVector::from_element(n, 1.0);
    for _ in 0..200 {
        let mut done = true;
        for i in 0..n {
            let mut c = 0.0;
            let mut r = 0.0;
            for j in (0..n).filter(|&j| j != i) {
                c += b[(j, i)].abs();
                r += b[(i, j)].abs();
            }
            if c == 0.0 || r == 0.0 {
                continue;
            }
            let total = c + r;
            let mut f = 1.0;
            while c < r / 2.0 {
                f *= 2.0;
                c *= 4.0;
            }
            while c >= r * 2.0 {
                f /= 2.0;
                c /= 4.0;
            }
            if (c + r) / f < 0.95 * total {
                done = false;
                d[i] *= f;
                b.column_mut(i).scale_mut(f);
                b.row_mut(i).scale_mut(1.0 / f);
            }
        }
        if done {
            break;
        }
    }
    (b, d)
}

fn dense_dominant(x: &DMatrix<f64>) -> PerronPair {
    let root = dense_spectral_radius(x);
    let v = null_vector(x, root);
    finish_pair(x, v, Some(root))
}

/// Power iteration for a nonnegative matrix with a positive dominant
/// eigenvector. The working matrix is squared every 32 iterations, so slow
/// ratios |λ₂|/μ close to one still converge in a few hundred steps.
/// Convergence is judged entrywise relative to each component.
fn power_iterate(x: &DMatrix<f64>, opts: &PerronOptions) -> Option<PerronPair> {
    const MAX_SQUARINGS: usize = 40;
    let n = x.nrows();
    let scale = x.amax();
    if !(scale > 0.0) || !scale.is_finite() {
        return None;
    }
    let mut y = x / scale;
    let mut v = DVector::from_element(n, 1.0 / n as f64);
    let mut squarings = 0;
    let mut converged_at: Option<usize> = None;
    let mut last_diff = f64::INFINITY;
    for iter in 1..=opts.max_iter {
        let mut w = &y * &v;
        let s = w.sum();
        if !(s > 0.0) || !s.is_finite() {
            return None;
        }
        w /= s;
        let diff = w
            .iter()
            .zip(v.iter())
            .map(|(a, b)| {
                let m = a.max(*b);
                if m > 0.0 {
                    (a - b).abs() / m
                } else {
                    0.0
                }
            })
            .fold(0.0, f64::max);
        v = w;
        match converged_at {
            Some(start) => {
                if diff >= last_diff || iter - start >= 8 {
                    break;
                }
            }
            None if diff <= opts.tol => converged_at = Some(iter),
            None => {}
        }
        last_diff = diff;
        if converged_at.is_none() && iter % 32 == 0 {
            if squarings == MAX_SQUARINGS {
                return None;
            }
            y = &y * &y;
            let m = y.amax();
            if !(m > 0.0) {
                return None;
            }
            y /= m;
            squarings += 1;
        }
    }
    converged_at?;
    if v.iter().any(|&c| !(c >= 0.0)) {
        return None;
    }
    Some(finish_pair(x, v, None))
}

fn dominant_nonnegative(x: &DMatrix<f64>, opts: &PerronOptions) -> Result<PerronPair> {
    let (b, d) = balance(x);
    let accept = |pair: PerronPair| -> Option<PerronPair> {
        if !(pair.root.is_finite() && pair.vector.iter().all(|&c| c >= 0.0)) {
            return None;
        }
        let mut v = pair.vector.component_mul(&d);
        let s = v.sum();
        if !(s > 0.0 && s.is_finite()) {
            return None;
        }
        v /= s;
        Some(PerronPair { vector: v, ..pair })
    };
    let tol = opts.tol.max(1e-14) * 1e2;
    if let Some(pair) = power_iterate(&b, opts).filter(|p| p.residual <= tol).and_then(accept) {
        return Ok(pair);
    }
    if opts.dense_fallback {
        if let Some(pair) = accept(dense_dominant(&b)) {
            return Ok(pair);
        }
    }
    Err(Error::NoConvergence {
        iterations: opts.max_iter,
    })
}

/// Perron root and vector of a strictly positive matrix.
pub fn perron_positive(x: &DMatrix<f64>, opts: &PerronOptions) -> Result<PerronPair> {
    for j in 0..x.ncols() {
        for i in 0..x.nrows() {
            if !(x[(i, j)] > 0.0) {
                return Err(Error::NotPositive { i, j });
            }
        }
    }
    dominant_nonnegative(x, opts)
}

/// Perron root of a nonnegative matrix whose dominant eigenvector is
/// positive (irreducible, possibly with zero entries). Used for monodromy
/// matrices whose small entries underflowed.
pub fn perron_nonnegative(x: &DMatrix<f64>, opts: &PerronOptions) -> Result<PerronPair> {
    if x.iter().any(|&v| v < 0.0 || !v.is_finite()) {
        return Err(Error::InvalidParameter(
            "matrix must be finite and nonnegative".into(),
        ));
    }
    dominant_nonnegative(x, opts)
}

/// Spectral abscissa and positive eigenvector of an irreducible Metzler matrix.
pub fn perron_frobenius_metzler(a: &DMatrix<f64>, opts: &PerronOptions) -> Result<PerronPair> {
    if !is_metzler(a) {
        return Err(Error::InvalidParameter(
            "matrix has negative off-diagonal entries".into(),
        ));
    }
    if !is_irreducible(a) {
        return Err(Error::Reducible);
    }
    let n = a.nrows();
    let shift = (0..n).map(|i| a[(i, i)].abs()).fold(0.0, f64::max) + 1.0;
    let x = a + DMatrix::identity(n, n) * shift;
    let pair = dominant_nonnegative(&x, opts)?;
    Ok(finish_pair(a, pair.vector, None))
}

/// λ_max of a Metzler matrix: Perron-Frobenius root when irreducible, dense
/// spectral abscissa otherwise.
pub fn spectral_abscissa(a: &DMatrix<f64>) -> f64 {
    if is_metzler(a) && is_irreducible(a) {
        if let Ok(pair) = perron_frobenius_metzler(a, &PerronOptions::default()) {
            return pair.root;
        }
    }
    dense_spectral_abscissa(a)
}

fn minor_without(a: &DMatrix<f64>, k: usize) -> DMatrix<f64> {
    let n = a.nrows();
    DMatrix::from_fn(n - 1, n - 1, |i, j| {
        let ii = if i >= k { i + 1 } else { i };
        let jj = if j >= k { j + 1 } else { j };
        a[(ii, jj)]
    })
}

/// Positive kernel vector of an irreducible Metzler matrix with zero column
/// sums, from the diagonal cofactors `δ_i = (−1)^{n−1} L*_ii`.
pub fn kernel_vector(l: &DMatrix<f64>) -> Result<DVector<f64>> {
    if !is_metzler(l) {
        return Err(Error::InvalidParameter(
            "migration matrix has negative off-diagonal entries".into(),
        ));
    }
    if !is_irreducible(l) {
        return Err(Error::Reducible);
    }
    let n = l.nrows();
    let sign = if (n - 1).is_multiple_of(2) { 1.0 } else { -1.0 };
    let delta = DVector::from_fn(n, |i, _| {
        if n == 1 {
            1.0
        } else {
            sign * minor_without(l, i).determinant()
        }
    });
    if delta.iter().any(|&d| !(d > 0.0)) {
        return Err(Error::Reducible);
    }
    let s = delta.sum();
    Ok(delta / s)
}
