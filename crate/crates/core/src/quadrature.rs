//! Quadrature over the truncated normal distribution of the coupling g.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

/// Default number of quadrature nodes for analytic observables.
pub const DEFAULT_ORDER: usize = 64;

/// Half-width of the integration interval in units of σ.
const SPAN_SIGMAS: f64 = 8.0;

/// Gauss–Legendre nodes and weights on [-1, 1].
pub fn gauss_legendre(order: usize) -> Vec<(f64, f64)> {
    assert!(order > 0, "quadrature order must be positive");
    let n = order;
    let mut out = vec![(0.0, 0.0); n];
    for i in 0..n.div_ceil(2) {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            // Legendre recurrence for P_n(x) and P_{n-1}(x)
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let k = k as f64;
                let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 1 { x } else { p1 };
            let pm = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (x * pn - pm) / (x * x - 1.0);
            let dx = pn / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        out[i] = (-x, w);
        out[n - 1 - i] = (x, w);
    }
    out
}

/// Normal distribution N(mean, σ) of the coupling, truncated to g ≥ 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianCoupling {
    pub mean: f64,
    pub sigma: f64,
}

impl GaussianCoupling {
    pub fn new(mean: f64, sigma: f64) -> Self {
        Self { mean, sigma }
    }

    /// Normalized (g, weight) pairs. σ = 0 yields the single point (mean, 1).
    pub fn nodes(&self, order: usize) -> Vec<(f64, f64)> {
        if self.sigma == 0.0 {
            return vec![(self.mean.max(0.0), 1.0)];
        }
        let lo = (self.mean - SPAN_SIGMAS * self.sigma).max(0.0);
        let hi = self.mean + SPAN_SIGMAS * self.sigma;
        if hi <= lo {
            return vec![(0.0, 1.0)];
        }
        let half = 0.5 * (hi - lo);
        let mid = 0.5 * (hi + lo);
        let mut nodes: Vec<(f64, f64)> = gauss_legendre(order)
            .into_iter()
            .map(|(x, w)| {
                let g = mid + half * x;
                let z = (g - self.mean) / self.sigma;
                (g, w * half * (-0.5 * z * z).exp())
            })
            .collect();
        let total: f64 = nodes.iter().map(|n| n.1).sum();
        for n in &mut nodes {
            n.1 /= total;
        }
        nodes
    }

    /// ⟨f(g)⟩ over the truncated distribution.
    pub fn average(&self, order: usize, mut f: impl FnMut(f64) -> f64) -> f64 {
        self.nodes(order).into_iter().map(|(g, w)| w * f(g)).sum()
    }
}
