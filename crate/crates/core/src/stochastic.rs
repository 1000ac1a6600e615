//! Markov-switched environments: `x' = (R(ω_{t/T}) + m L(ω_{t/T})) x` where
//! `ω` is a finite-state continuous-time Markov chain.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::COLUMN_SUM_TOL;
use crate::spectral::{expm_scaled, is_irreducible, kernel_vector, spectral_abscissa};

/// Seed used when the caller does not supply one.
pub const DEFAULT_SEED: u64 = 20240611;

/// Fewer jumps than this makes the estimate meaningless.
pub const MIN_JUMPS: u64 = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct EnvironmentState {
    pub growth: DVector<f64>,
    pub migration: DMatrix<f64>,
}

impl EnvironmentState {
    pub fn generator(&self, m: f64) -> DMatrix<f64> {
        let mut a = &self.migration * m;
        for i in 0..self.growth.len() {
            a[(i, i)] += self.growth[i];
        }
        a
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MarkovEnvironment {
    pub states: Vec<EnvironmentState>,
    /// Rate matrix, rows summing to zero.
    pub generator: DMatrix<f64>,
    pub stationary: DVector<f64>,
}

impl MarkovEnvironment {
    pub fn new(states: Vec<EnvironmentState>, generator: DMatrix<f64>) -> Result<Self> {
        let k = states.len();
        if k == 0 {
            return Err(Error::Schema("at least one state required".into()));
        }
        if generator.nrows() != k || generator.ncols() != k {
            return Err(Error::WrongDimension {
                expected: k,
                found: generator.nrows(),
            });
        }
        let n = states[0].growth.len();
        if n == 0 {
            return Err(Error::Schema("states need at least one patch".into()));
        }
        for (s, st) in states.iter().enumerate() {
            if st.growth.len() != n || st.migration.nrows() != n || st.migration.ncols() != n {
                return Err(Error::WrongDimension {
                    expected: n,
                    found: st.migration.nrows().max(st.growth.len()),
                });
            }
            for j in 0..n {
                for i in 0..n {
                    if i != j && st.migration[(i, j)] < 0.0 {
                        return Err(Error::NegativeOffDiagonal { segment: s, i, j });
                    }
                }
                let residual = st.migration.column(j).sum();
                if residual.abs() > COLUMN_SUM_TOL {
                    return Err(Error::ColumnSumViolation {
                        segment: s,
                        column: j,
                        residual,
                    });
                }
            }
        }
        for i in 0..k {
            for j in 0..k {
                if i != j && generator[(i, j)] < 0.0 {
                    return Err(Error::Schema(format!(
                        "generator entry ({i}, {j}) is negative"
                    )));
                }
            }
            let row = generator.row(i).sum();
            if row.abs() > COLUMN_SUM_TOL {
                return Err(Error::Schema(format!(
                    "generator row {i} sums to {row:e}, expected 0"
                )));
            }
        }
        let stationary = stationary_of(&generator)?;
        Ok(Self {
            states,
            generator,
            stationary,
        })
    }

    pub fn n(&self) -> usize {
        self.states[0].growth.len()
    }

    pub fn state_count(&self) -> usize {
        self.states.len()
    }
}

fn stationary_of(q: &DMatrix<f64>) -> Result<DVector<f64>> {
    if q.nrows() == 1 {
        return Ok(DVector::from_element(1, 1.0));
    }
    let qt = q.transpose();
    if !is_irreducible(&qt) {
        return Err(Error::ReducibleChain);
    }
    kernel_vector(&qt).map_err(|_| Error::ReducibleChain)
}

/// Left kernel vector of the generator, normalized to a distribution.
pub fn stationary_distribution(generator: &DMatrix<f64>) -> Result<DVector<f64>> {
    stationary_of(generator)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LyapunovEstimate {
    pub lambda_hat: f64,
    pub stderr: f64,
    pub horizon: f64,
    pub renormalizations: u64,
    pub jumps: u64,
    pub batches: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy)]
pub struct SimulationOptions {
    pub batches: usize,
    /// Unrecorded warm-up per batch, as a fraction of the batch length.
    pub burn_in: f64,
}

impl Default for SimulationOptions {
    fn default() -> Self {
        Self {
            batches: 20,
            burn_in: 0.1,
        }
    }
}

struct BatchOutcome {
    log_growth: f64,
    renormalizations: u64,
    jumps: u64,
}

struct Walker<'a> {
    env: &'a MarkovEnvironment,
    generators: &'a [DMatrix<f64>],
    period: f64,
    rng: ChaCha8Rng,
    state: usize,
    x: DVector<f64>,
}

impl Walker<'_> {
    fn pick(&mut self, weights: impl Iterator<Item = (usize, f64)> + Clone) -> usize {
        let total: f64 = weights.clone().map(|w| w.1).sum();
        let mut u = self.rng.random::<f64>() * total;
        let mut last = 0;
        for (i, w) in weights {
            if w <= 0.0 {
                continue;
            }
            last = i;
            if u < w {
                return i;
            }
            u -= w;
        }
        last
    }

    /// Runs for `duration` time units, returning accumulated `ln ‖x‖₁` growth.
    fn run(&mut self, duration: f64) -> Result<BatchOutcome> {
        let mut out = BatchOutcome {
            log_growth: 0.0,
            renormalizations: 0,
            jumps: 0,
        };
        let mut remaining = duration;
        while remaining > 0.0 {
            let rate = -self.env.generator[(self.state, self.state)];
            let hold = if rate > 0.0 {
                // inverse CDF on (0, 1]
                let u = 1.0 - self.rng.random::<f64>();
                -u.ln() / rate * self.period
            } else {
                f64::INFINITY
            };
            let dt = hold.min(remaining);
            let e = expm_scaled(&self.generators[self.state], dt)?;
            let y = &e.matrix * &self.x;
            let s = y.sum();
            if !(s > 0.0) || !s.is_finite() {
                return Err(Error::IntegrationFailure(
                    "population vector left the positive cone".into(),
                ));
            }
            out.log_growth += e.log_scale + s.ln();
            self.x = y / s;
            out.renormalizations += 1;
            remaining -= dt;
            if hold <= dt && remaining > 0.0 {
                let from = self.state;
                let q = &self.env.generator;
                let k = self.env.state_count();
                self.state = self.pick((0..k).filter(move |&j| j != from).map(move |j| (j, q[(from, j)])));
                out.jumps += 1;
            } else if hold.is_finite() && hold <= dt {
                out.jumps += 1;
            }
        }
        Ok(out)
    }
}

/// Monte-Carlo estimate of the Lyapunov exponent with the chain slowed down
/// by `T` (holding times multiplied by `T`).
pub fn simulate_lyapunov(
    env: &MarkovEnvironment,
    m: f64,
    period: f64,
    horizon: f64,
    seed: u64,
) -> Result<LyapunovEstimate> {
    simulate_lyapunov_with(env, m, period, horizon, seed, &SimulationOptions::default())
}

pub fn simulate_lyapunov_with(
    env: &MarkovEnvironment,
    m: f64,
    period: f64,
    horizon: f64,
    seed: u64,
    opts: &SimulationOptions,
) -> Result<LyapunovEstimate> {
    if !(m >= 0.0 && m.is_finite()) {
        return Err(Error::InvalidParameter("m must be finite and ≥ 0".into()));
    }
    if !(period > 0.0 && period.is_finite()) {
        return Err(Error::InvalidParameter("T must be finite and > 0".into()));
    }
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::InvalidParameter("horizon must be finite and > 0".into()));
    }
    if opts.batches < 2 {
        return Err(Error::InvalidParameter("at least two batches required".into()));
    }
    let generators: Vec<DMatrix<f64>> = env.states.iter().map(|s| s.generator(m)).collect();
    let batch_len = horizon / opts.batches as f64;
    let n = env.n();

    let outcomes: Vec<Result<BatchOutcome>> = (0..opts.batches)
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(b as u64);
            let mut w = Walker {
                env,
                generators: &generators,
                period,
                rng,
                state: 0,
                x: DVector::from_element(n, 1.0 / n as f64),
            };
            let pi = env.stationary.clone();
            w.state = w.pick(pi.iter().copied().enumerate());
            w.run(batch_len * opts.burn_in)?;
            w.run(batch_len)
        })
        .collect();

    let mut rates = Vec::with_capacity(opts.batches);
    let mut renormalizations = 0;
    let mut jumps = 0;
    for o in outcomes {
        let o = o?;
        rates.push(o.log_growth / batch_len);
        renormalizations += o.renormalizations;
        jumps += o.jumps;
    }
    if env.state_count() > 1 && jumps < MIN_JUMPS {
        return Err(Error::DegenerateHorizon { jumps });
    }
    let k = rates.len() as f64;
    let mean = rates.iter().sum::<f64>() / k;
    let var = rates.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (k - 1.0);
    let floor = 1e-15 * mean.abs().max(1.0);
    Ok(LyapunovEstimate {
        lambda_hat: mean,
        stderr: (var / k).sqrt().max(floor),
        horizon,
        renormalizations,
        jumps,
        batches: opts.batches,
        seed,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StochasticLimits {
    /// `λ_max(Σ_s μ_s A_s)`, the fast-switching limit.
    pub t0: f64,
    /// `Σ_s μ_s λ_max(A_s)`, the slow-switching limit.
    pub tinf: f64,
    /// `Σ_s μ_s max_i r_i(s)`, an upper bound for every `(m, T)`.
    pub chi: f64,
    pub corners: StochasticCorners,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StochasticCorners {
    /// `max_i r̄_i`, the `m → 0` value.
    pub slow_migration: f64,
    /// `Σ_s μ_s Σ_i p_i(s) r_i(s)`; `None` when some `L_s` is reducible.
    pub fast_migration_slow_switching: Option<f64>,
    /// `Σ_i q_i r̄_i` with `q` the kernel vector of `Σ_s μ_s L_s`.
    pub fast_migration_fast_switching: Option<f64>,
}

pub fn stochastic_limits(env: &MarkovEnvironment, m: f64) -> Result<StochasticLimits> {
    let mu = &env.stationary;
    let n = env.n();
    let mut avg_a = DMatrix::zeros(n, n);
    let mut avg_l = DMatrix::zeros(n, n);
    let mut avg_r = DVector::zeros(n);
    let mut tinf = 0.0;
    let mut chi = 0.0;
    let mut p_weighted = Some(0.0);
    for (s, st) in env.states.iter().enumerate() {
        let a = st.generator(m);
        avg_a += &a * mu[s];
        avg_l += &st.migration * mu[s];
        avg_r += &st.growth * mu[s];
        tinf += mu[s] * spectral_abscissa(&a);
        chi += mu[s] * st.growth.max();
        p_weighted = match (p_weighted, kernel_vector(&st.migration)) {
            (Some(acc), Ok(p)) => Some(acc + mu[s] * p.dot(&st.growth)),
            _ => None,
        };
    }
    let q_weighted = kernel_vector(&avg_l).ok().map(|q| q.dot(&avg_r));
    Ok(StochasticLimits {
        t0: spectral_abscissa(&avg_a),
        tinf,
        chi,
        corners: StochasticCorners {
            slow_migration: avg_r.max(),
            fast_migration_slow_switching: p_weighted,
            fast_migration_fast_switching: q_weighted,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_state(q: [f64; 4]) -> MarkovEnvironment {
        let l = DMatrix::from_row_slice(2, 2, &[-1.0, 1.0, 1.0, -1.0]);
        MarkovEnvironment::new(
            vec![
                EnvironmentState {
                    growth: DVector::from_vec(vec![0.5, -1.5]),
                    migration: l.clone(),
                },
                EnvironmentState {
                    growth: DVector::from_vec(vec![-1.5, 0.5]),
                    migration: l,
                },
            ],
            DMatrix::from_row_slice(2, 2, &q),
        )
        .unwrap()
    }

    #[test]
    fn stationary_examples() {
        let s = stationary_distribution(&DMatrix::from_row_slice(2, 2, &[-1.0, 1.0, 1.0, -1.0])).unwrap();
        assert!((s[0] - 0.5).abs() < 1e-15);
        let s = stationary_distribution(&DMatrix::from_row_slice(2, 2, &[-2.0, 2.0, 1.0, -1.0])).unwrap();
        assert!((s[0] - 1.0 / 3.0).abs() < 1e-15 && (s[1] - 2.0 / 3.0).abs() < 1e-15);
        let cyc = DMatrix::from_row_slice(3, 3, &[-1.0, 1.0, 0.0, 0.0, -1.0, 1.0, 1.0, 0.0, -1.0]);
        let s = stationary_distribution(&cyc).unwrap();
        assert!(s.iter().all(|v| (v - 1.0 / 3.0).abs() < 1e-15));
        let absorbing = DMatrix::from_row_slice(2, 2, &[-1.0, 1.0, 0.0, 0.0]);
        assert_eq!(stationary_distribution(&absorbing), Err(Error::ReducibleChain));
    }

    #[test]
    fn twin_limits() {
        let env = two_state([-1.0, 1.0, 1.0, -1.0]);
        let lim = stochastic_limits(&env, 1.0).unwrap();
        assert!((lim.tinf - (-0.5 + 2f64.sqrt() - 1.0)).abs() < 1e-12);
        assert!((lim.t0 + 0.5).abs() < 1e-12);
        assert!((lim.chi - 0.5).abs() < 1e-15);
    }

    #[test]
    fn seed_determinism() {
        let env = two_state([-1.0, 1.0, 1.0, -1.0]);
        let a = simulate_lyapunov(&env, 1.0, 1.0, 2000.0, 7).unwrap();
        let b = simulate_lyapunov(&env, 1.0, 1.0, 2000.0, 7).unwrap();
        assert_eq!(a, b);
        let c = simulate_lyapunov(&env, 1.0, 1.0, 2000.0, 8).unwrap();
        assert_ne!(a.lambda_hat, c.lambda_hat);
    }

    #[test]
    fn short_horizon_is_degenerate() {
        let env = two_state([-1.0, 1.0, 1.0, -1.0]);
        assert!(matches!(
            simulate_lyapunov(&env, 1.0, 10.0, 50.0, 1),
            Err(Error::DegenerateHorizon { .. })
        ));
    }

    #[test]
    fn bad_generator_rows() {
        let l = DMatrix::from_row_slice(2, 2, &[-1.0, 1.0, 1.0, -1.0]);
        let st = EnvironmentState {
            growth: DVector::from_vec(vec![0.0, 0.0]),
            migration: l,
        };
        let e = MarkovEnvironment::new(
            vec![st.clone(), st],
            DMatrix::from_row_slice(2, 2, &[-1.0, 2.0, 1.0, -1.0]),
        );
        assert!(matches!(e, Err(Error::Schema(_))));
    }
}
