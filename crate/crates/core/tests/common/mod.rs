//! Random piecewise-constant models and a test-side integrator used as an
//! independent reference for the library.
#![allow(dead_code)]

use dig_core::model::{migration_matrix, PatchModel};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::Rng;

/// Raw parameters of a piecewise-constant model: per piece, a growth vector
/// and the off-diagonal flows `flows[j][i]` from `j` to `i`.
#[derive(Debug, Clone)]
pub struct RandomModel {
    pub n: usize,
    pub breaks: Vec<f64>,
    pub growth: Vec<Vec<f64>>,
    pub flows: Vec<Vec<Vec<f64>>>,
}

impl RandomModel {
    pub fn pieces(&self) -> usize {
        self.breaks.len()
    }

    pub fn piece_len(&self, k: usize) -> f64 {
        let end = self.breaks.get(k + 1).copied().unwrap_or(1.0);
        end - self.breaks[k]
    }

    pub fn constant_migration(&self) -> bool {
        self.flows.windows(2).all(|w| w[0] == w[1])
    }

    fn migration(&self, k: usize) -> DMatrix<f64> {
        let mut entries = Vec::new();
        for j in 0..self.n {
            for i in 0..self.n {
                if i != j {
                    entries.push((i, j, self.flows[k][j][i]));
                }
            }
        }
        migration_matrix(self.n, &entries)
    }

    pub fn build(&self) -> PatchModel {
        PatchModel::from_segments(
            self.breaks.iter().copied().zip(self.growth.iter().cloned()).collect(),
            self.breaks
                .iter()
                .enumerate()
                .map(|(k, &b)| (b, self.migration(k)))
                .collect(),
        )
        .expect("random model is well formed")
    }

    /// `diag(r) + m L` on piece `k`, assembled directly from the raw data.
    pub fn generator(&self, k: usize, m: f64) -> DMatrix<f64> {
        let n = self.n;
        DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                let out: f64 = (0..n).filter(|&o| o != j).map(|o| self.flows[k][j][o]).sum();
                self.growth[k][i] - m * out
            } else {
                m * self.flows[k][j][i]
            }
        })
    }

    /// `χ`: period average of the largest growth rate.
    pub fn chi(&self) -> f64 {
        (0..self.pieces())
            .map(|k| self.piece_len(k) * self.growth[k].iter().copied().fold(f64::MIN, f64::max))
            .sum()
    }

    pub fn mean_growth(&self) -> DVector<f64> {
        let mut r = DVector::zeros(self.n);
        for k in 0..self.pieces() {
            r += DVector::from_vec(self.growth[k].clone()) * self.piece_len(k);
        }
        r
    }

    pub fn random(rng: &mut impl Rng, n: usize, pieces: usize, constant_l: bool) -> Self {
        let mut inner: Vec<f64> = (1..pieces).map(|_| rng.random_range(0.05..0.95)).collect();
        inner.sort_by(f64::total_cmp);
        inner.dedup_by(|a, b| (*a - *b).abs() < 0.02);
        let mut breaks = vec![0.0];
        breaks.extend(inner);
        let p = breaks.len();
        let growth = (0..p)
            .map(|_| (0..n).map(|_| rng.random_range(-2.0..1.0)).collect())
            .collect();
        let flow = |rng: &mut dyn rand::RngCore| -> Vec<Vec<f64>> {
            (0..n)
                .map(|j| {
                    (0..n)
                        .map(|i| if i == j { 0.0 } else { rng.random_range(0.1..2.0) })
                        .collect()
                })
                .collect()
        };
        let flows = if constant_l {
            let f = flow(rng);
            vec![f; p]
        } else {
            (0..p).map(|_| flow(rng)).collect()
        };
        Self {
            n,
            breaks,
            growth,
            flows,
        }
    }
}

/// Models with every piece irreducible, `n ∈ {2, 3, 4}`, one to three pieces.
pub fn random_model() -> impl Strategy<Value = RandomModel> {
    (2usize..=4, 1usize..=3, any::<bool>(), any::<u64>()).prop_map(|(n, pieces, constant_l, seed)| {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        RandomModel::random(&mut rng, n, pieces, constant_l)
    })
}

/// Log-uniform `(m, T)`.
pub fn parameters() -> impl Strategy<Value = (f64, f64)> {
    (-3.0f64..1.6, -2.3f64..3.9).prop_map(|(lm, lt)| (lm.exp(), lt.exp()))
}

fn rk4(a: &DMatrix<f64>, x: &mut DVector<f64>, h: f64) {
    let k1 = a * &*x;
    let k2 = a * (&*x + &k1 * (h / 2.0));
    let k3 = a * (&*x + &k2 * (h / 2.0));
    let k4 = a * (&*x + &k3 * h);
    *x += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
}

/// Growth rate from integrating `x' = A(t/T) x` over many periods with
/// fixed-step RK4, renormalizing once per period. Returns the slope of
/// `ln ‖x‖` between periods `periods/2` and `periods`.
pub fn long_horizon_growth(model: &RandomModel, m: f64, period: f64, periods: usize) -> f64 {
    let gens: Vec<DMatrix<f64>> = (0..model.pieces()).map(|k| model.generator(k, m)).collect();
    let steps: Vec<(usize, f64)> = gens
        .iter()
        .enumerate()
        .map(|(k, a)| {
            let dt = model.piece_len(k) * period;
            let norm = a.iter().map(|v| v.abs()).fold(0.0, f64::max) * model.n as f64;
            let s = ((dt * norm / 0.05).ceil() as usize).max(4);
            (s, dt / s as f64)
        })
        .collect();
    let mut x = DVector::from_element(model.n, 1.0);
    let mut log_mass = 0.0;
    let mut at_half = 0.0;
    for p in 1..=periods {
        for (a, &(s, h)) in gens.iter().zip(&steps) {
            for _ in 0..s {
                rk4(a, &mut x, h);
            }
        }
        let mass = x.sum();
        log_mass += mass.ln();
        x /= mass;
        if p == periods / 2 {
            at_half = log_mass;
        }
    }
    (log_mass - at_half) / ((periods - periods / 2) as f64 * period)
}
