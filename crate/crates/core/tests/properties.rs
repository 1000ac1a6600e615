//! Property tests over random models and the built-in catalog.

mod common;

use common::{parameters, random_model};
use dig_core::asymptotics::{chi, limit_tinf, m_star, MStar};
use dig_core::catalog::{builtin, Catalog};
use dig_core::dynamics::{growth_rate, monodromy, simplex_trajectory};
use dig_core::explorer::{critical_curve, sweep, Axis};
use dig_core::model::ModelParameters;
use dig_core::spectral::{
    dense_spectral_abscissa, eigenvalues, expm, kernel_vector, perron_frobenius_metzler,
    perron_positive, spectral_abscissa, PerronOptions, ScaledMatrix,
};
use dig_core::stochastic::{
    simulate_lyapunov, stationary_distribution, EnvironmentState, MarkovEnvironment,
};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn params(m: f64, t: f64) -> ModelParameters {
    ModelParameters::new(m, t).unwrap()
}

/// Irreducible Metzler matrix: positive off-diagonal, arbitrary diagonal.
fn metzler() -> impl Strategy<Value = DMatrix<f64>> {
    (2usize..=6, any::<u64>()).prop_map(|(n, seed)| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                rng.random_range(-3.0..3.0)
            } else {
                rng.random_range(0.01..2.0)
            }
        })
    })
}

fn migration_generator() -> impl Strategy<Value = DMatrix<f64>> {
    metzler().prop_map(|mut l| {
        for j in 0..l.ncols() {
            let off: f64 = (0..l.nrows()).filter(|&i| i != j).map(|i| l[(i, j)]).sum();
            l[(j, j)] = -off;
        }
        l
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn perron_pair_is_dominant(a in metzler()) {
        let pair = perron_frobenius_metzler(&a, &PerronOptions::default()).unwrap();
        let resid = (&a * &pair.vector - &pair.vector * pair.root).amax();
        prop_assert!(resid <= 1e-9 * (1.0 + a.amax()), "residual {resid}");
        prop_assert!(pair.vector.iter().all(|&v| v > 0.0));
        prop_assert!((pair.vector.sum() - 1.0).abs() < 1e-12);
        for z in eigenvalues(&a) {
            prop_assert!(pair.root >= z.re - 1e-9, "{} < {}", pair.root, z.re);
        }
    }

    #[test]
    fn kernel_vector_is_perron_vector(l in migration_generator()) {
        let q = kernel_vector(&l).unwrap();
        let pf = perron_frobenius_metzler(&l, &PerronOptions::default()).unwrap();
        prop_assert!((&l * &q).amax() <= 1e-10);
        prop_assert!((&q - &pf.vector).amax() <= 1e-10);
        prop_assert!(pf.root.abs() <= 1e-10);
    }

    #[test]
    fn exponential_semigroup(a in metzler(), s in 0.0f64..1.0, t in 0.0f64..1.0) {
        let m = &a * (5.0 / a.norm().max(5.0));
        let lhs = expm(&m, s + t).unwrap();
        let rhs = expm(&m, s).unwrap() * expm(&m, t).unwrap();
        prop_assert!((&lhs - &rhs).amax() <= 1e-10 * lhs.amax().max(1.0));
    }

    #[test]
    fn column_sums_vanish(rm in random_model()) {
        let model = rm.build();
        for piece in model.pieces() {
            let l = model.migration_in(&piece, piece.mid());
            for j in 0..model.n() {
                prop_assert!(l.column(j).sum().abs() <= 1e-12);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn lambda_is_invariant_under_repeated_periods(
        rm in random_model(), (m, t) in parameters(), k in 2usize..=4,
    ) {
        let model = rm.build();
        let lambda = growth_rate(&model, &params(m, t)).unwrap().lambda;
        let one = monodromy(&model, &params(m, t)).unwrap();
        let mut power = ScaledMatrix::identity(model.n());
        for _ in 0..k {
            power = power.then_left(&one);
        }
        let mu = perron_positive(&power.matrix, &PerronOptions::default()).unwrap().root;
        let repeated = (mu.ln() + power.log_scale) / (k as f64 * t);
        prop_assert!((repeated - lambda).abs() <= 1e-9 * (1.0 + lambda.abs()));
    }

    #[test]
    fn lambda_is_bounded_by_chi(rm in random_model(), (m, t) in parameters()) {
        let model = rm.build();
        let lambda = growth_rate(&model, &params(m, t)).unwrap().lambda;
        prop_assert!(lambda <= rm.chi() + 1e-9, "{lambda} > {}", rm.chi());
        prop_assert!((chi(&model) - rm.chi()).abs() <= 1e-12);
    }

    #[test]
    fn frozen_abscissa_lies_within_growth_range(rm in random_model(), (m, _t) in parameters()) {
        let model = rm.build();
        for (k, piece) in model.pieces().iter().enumerate() {
            let a = model.generator_in(piece, m, piece.mid());
            let lam = spectral_abscissa(&a);
            let r = &rm.growth[k];
            let lo = r.iter().copied().fold(f64::MAX, f64::min);
            let hi = r.iter().copied().fold(f64::MIN, f64::max);
            prop_assert!(lam >= lo - 1e-9 && lam <= hi + 1e-9);
            prop_assert!((lam - dense_spectral_abscissa(&a)).abs() <= 1e-9);
        }
    }

    #[test]
    fn component_exponents_agree(rm in random_model(), (m, t) in parameters()) {
        let model = rm.build();
        let lambda = growth_rate(&model, &params(m, t)).unwrap().lambda;
        let phi = monodromy(&model, &params(m, t)).unwrap();
        let n = model.n();
        let mut x = DVector::from_fn(n, |i, _| 1.0 + i as f64);
        let mut log_mass = 0.0;
        let half = ((2000.0 / t).ceil() as usize).max(200);
        let periods = 2 * half;
        let mut at_half = DVector::zeros(n);
        for p in 1..=periods {
            x = &phi.matrix * &x;
            let s = x.sum();
            log_mass += phi.log_scale + s.ln();
            x /= s;
            if p == half {
                at_half = x.map(|v| v.ln() + log_mass);
            }
        }
        let span = (periods - half) as f64 * t;
        let slopes: Vec<f64> = (0..n).map(|i| (x[i].ln() + log_mass - at_half[i]) / span).collect();
        for s in &slopes {
            prop_assert!((s - lambda).abs() <= 1e-6 * (1.0 + lambda.abs()), "{s} vs {lambda}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn projected_flow_stays_on_simplex(
        rm in random_model(), (m, t) in parameters(), seed in any::<u64>(),
    ) {
        let model = rm.build();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let theta0: Vec<f64> = (0..model.n()).map(|_| rng.random_range(0.05..1.0)).collect();
        let traj = simplex_trajectory(&model, &params(m, t), &theta0, 3, 200).unwrap();
        for state in &traj.states {
            let sum: f64 = state.iter().sum();
            prop_assert!((sum - 1.0).abs() <= 1e-10);
            prop_assert!(state.iter().all(|&v| v > 0.0));
        }
    }
}

#[test]
fn builtins_are_well_formed() {
    for f in Catalog::standard().factories() {
        let model = builtin(f.name()).unwrap();
        let report = model.validate().unwrap();
        assert_eq!(report, model.validate().unwrap(), "{}", f.name());
        for piece in model.pieces() {
            let l = model.migration_in(&piece, piece.mid());
            for j in 0..model.n() {
                assert!(l.column(j).sum().abs() <= 1e-12, "{}", f.name());
            }
        }
        if report.all_sinks {
            assert!(report.mean_growth.iter().all(|&r| r < 0.0), "{}", f.name());
        }
    }
}

#[test]
fn slow_switching_limit_changes_sign_at_m_star() {
    for spec in ["ab1", "ab2s", "abc_two_patch", "three_patch_circular", "fainshil"] {
        let model = builtin(spec).unwrap();
        let MStar::Root { m_star: ms, .. } = m_star(&model, 1e4).unwrap() else {
            panic!("{spec}: no m*");
        };
        for f in [0.1, 0.5, 0.9, 0.99] {
            assert!(limit_tinf(&model, ms * f).unwrap() > 0.0, "{spec} below m*");
        }
        for f in [1.01, 1.1, 2.0, 10.0] {
            assert!(limit_tinf(&model, ms * f).unwrap() < 0.0, "{spec} above m*");
        }
    }
}

#[test]
fn curve_vertices_are_zeros() {
    for spec in ["ab1", "ab2s", "abc_two_patch", "fainshil"] {
        let model = builtin(spec).unwrap();
        let curve = critical_curve(
            &model,
            Axis::log(0.01, 100.0, 40),
            Axis::log(0.01, 1000.0, 40),
            1e-8,
        )
        .unwrap();
        assert!(!curve.branches.is_empty(), "{spec}");
        for p in curve.branches.iter().flat_map(|b| &b.points) {
            let lambda = growth_rate(&model, &params(p.m, p.t)).unwrap().lambda;
            assert!(lambda.abs() <= 1e-8, "{spec} at ({}, {}): {lambda}", p.m, p.t);
        }
    }
}

#[test]
fn cell_midpoints_follow_uniform_corners() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for spec in ["ab1", "abc_two_patch", "fainshil"] {
        let model = builtin(spec).unwrap();
        let grid = sweep(&model, Axis::log(0.01, 100.0, 24), Axis::log(0.01, 1000.0, 24)).unwrap();
        let mut checked = 0;
        while checked < 100 {
            let i = rng.random_range(0..23);
            let j = rng.random_range(0..23);
            let corners = [
                grid.lambda[i][j],
                grid.lambda[i + 1][j],
                grid.lambda[i][j + 1],
                grid.lambda[i + 1][j + 1],
            ];
            let positive = corners.iter().all(|&v| v > 0.0);
            if !positive && !corners.iter().all(|&v| v < 0.0) {
                continue;
            }
            let m = (grid.m_values[i] * grid.m_values[i + 1]).sqrt();
            let t = (grid.t_values[j] * grid.t_values[j + 1]).sqrt();
            let mid = growth_rate(&model, &params(m, t)).unwrap().lambda;
            assert_eq!(mid > 0.0, positive, "{spec} at ({m}, {t})");
            checked += 1;
        }
    }
}

#[test]
fn sweep_is_deterministic_and_below_chi() {
    let model = builtin("abc_two_patch").unwrap();
    let (ma, ta) = (Axis::log(0.01, 100.0, 20), Axis::log(0.01, 1000.0, 20));
    let a = sweep(&model, ma, ta).unwrap();
    let b = sweep(&model, ma, ta).unwrap();
    let bits = |g: &dig_core::explorer::SweepGrid| -> Vec<u64> {
        g.lambda.iter().flatten().map(|v| v.to_bits()).collect()
    };
    assert_eq!(bits(&a), bits(&b));
    for v in a.lambda.iter().flatten() {
        assert!(*v <= a.chi + 1e-9);
    }
}

fn two_state_env() -> MarkovEnvironment {
    let l = DMatrix::from_row_slice(2, 2, &[-1.0, 1.0, 1.0, -1.0]);
    let states = vec![
        EnvironmentState {
            growth: DVector::from_vec(vec![0.5, -1.5]),
            migration: l.clone(),
        },
        EnvironmentState {
            growth: DVector::from_vec(vec![-1.5, 0.5]),
            migration: l,
        },
    ];
    let q = DMatrix::from_row_slice(2, 2, &[-1.0, 1.0, 2.0, -2.0]);
    MarkovEnvironment::new(states, q).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    #[test]
    fn stationary_distribution_is_invariant(q in migration_generator()) {
        // Column-generator transposed gives a rate matrix with zero row sums.
        let rates = q.transpose();
        let pi = stationary_distribution(&rates).unwrap();
        prop_assert!((pi.transpose() * &rates).amax() <= 1e-10);
        prop_assert!((pi.sum() - 1.0).abs() <= 1e-12);
        prop_assert!(pi.iter().all(|&p| p > 0.0));
    }
}

#[test]
fn simulation_is_seeded_and_bounded() {
    let env = two_state_env();
    let a = simulate_lyapunov(&env, 1.0, 1.0, 1e4, 11).unwrap();
    let b = simulate_lyapunov(&env, 1.0, 1.0, 1e4, 11).unwrap();
    assert_eq!(a, b);
    let c = simulate_lyapunov(&env, 1.0, 1.0, 1e4, 12).unwrap();
    assert_ne!(a.lambda_hat, c.lambda_hat);
    let bound = dig_core::stochastic::stochastic_limits(&env, 1.0).unwrap().chi;
    for est in [&a, &c] {
        assert!(est.lambda_hat <= bound + 3.0 * est.stderr);
    }
}

#[test]
fn simulation_horizons_agree() {
    let env = two_state_env();
    let short = simulate_lyapunov(&env, 0.5, 1.0, 1e5, 3).unwrap();
    let long = simulate_lyapunov(&env, 0.5, 1.0, 1e6, 4).unwrap();
    let spread = 3.0 * (short.stderr.powi(2) + long.stderr.powi(2)).sqrt();
    assert!(
        (short.lambda_hat - long.lambda_hat).abs() <= spread,
        "{} vs {} (3σ = {spread})",
        short.lambda_hat,
        long.lambda_hat
    );
}

#[test]
fn slow_switching_bias_shrinks() {
    let env = two_state_env();
    let m = 0.5;
    let target = dig_core::stochastic::stochastic_limits(&env, m).unwrap().tinf;
    let mut biases = Vec::new();
    for t in [10.0, 100.0, 1000.0] {
        let mut est: Vec<f64> = (0..7)
            .map(|s| simulate_lyapunov(&env, m, t, 2000.0 * t, s).unwrap().lambda_hat)
            .collect();
        est.sort_by(f64::total_cmp);
        biases.push((est[3] - target).abs());
    }
    assert!(biases[0] > biases[1] && biases[1] > biases[2], "{biases:?}");
}
