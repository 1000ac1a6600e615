//! Gauss-Legendre rules.

use std::f64::consts::PI;

/// Nodes and weights of the `n`-point Gauss-Legendre rule on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for k in 0..n.div_ceil(2) {
        let mut x = (PI * (k as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[k] = -x;
        nodes[n - 1 - k] = x;
        weights[k] = w;
        weights[n - 1 - k] = w;
    }
    (nodes, weights)
}

fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// A rule mapped to `[0, 1]`: nodes in `(0, 1)`, weights summing to one.
#[derive(Debug, Clone)]
pub struct UnitRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl UnitRule {
    pub fn new(n: usize) -> Self {
        let (x, w) = gauss_legendre(n);
        Self {
            nodes: x.iter().map(|t| 0.5 * (t + 1.0)).collect(),
            weights: w.iter().map(|w| 0.5 * w).collect(),
        }
    }

    /// `∫_a^b f`.
    pub fn integrate(&self, a: f64, b: f64, mut f: impl FnMut(f64) -> f64) -> f64 {
        let h = b - a;
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(a + h * x))
            .sum::<f64>()
            * h
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_sum_to_two() {
        for n in [1, 2, 5, 17, 64] {
            let (_, w) = gauss_legendre(n);
            assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-13, "n={n}");
        }
    }

    #[test]
    fn exact_for_polynomials() {
        let rule = UnitRule::new(5);
        // degree 9 is integrated exactly by 5 points
        let v = rule.integrate(0.0, 2.0, |x| x.powi(9));
        assert!((v - 2f64.powi(10) / 10.0).abs() < 1e-11);
    }

    #[test]
    fn smooth_integrand() {
        let rule = UnitRule::new(64);
        let v = rule.integrate(0.0, PI, f64::sin);
        assert!((v - 2.0).abs() < 1e-14);
    }
}
