//! Small unconstrained minimizers: BFGS with Armijo backtracking, and
//! Nelder–Mead for derivative-free fits.

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone, Copy)]
pub struct Tolerances {
    pub max_iter: usize,
    /// Relative change of the objective between accepted iterates.
    pub f_rel: f64,
    /// Euclidean norm of the accepted step.
    pub step: f64,
    pub grad: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { max_iter: 100_000, f_rel: 1e-10, step: 1e-8, grad: 1e-14 }
    }
}

#[derive(Debug, Clone)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub f: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Norm of the last accepted step (BFGS) or simplex diameter (Nelder–Mead).
    pub residual: f64,
    /// Objective value after every accepted iterate, starting with f(x0).
    pub history: Vec<f64>,
}

pub fn bfgs<F>(mut fg: F, x0: &[f64], tol: Tolerances) -> Minimum
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    let n = x0.len();
    let mut x = DVector::from_column_slice(x0);
    let (mut f, g) = fg(x.as_slice());
    let mut g = DVector::from_vec(g);
    let mut h = DMatrix::<f64>::identity(n, n);
    let mut fresh = true;
    let mut history = vec![f];
    let mut residual = f64::INFINITY;
    let mut converged = false;
    let mut iterations = 0;

    while iterations < tol.max_iter {
        iterations += 1;
        if g.norm() <= tol.grad {
            converged = true;
            break;
        }
        let mut p = -(&h * &g);
        let mut slope = g.dot(&p);
        if slope >= 0.0 {
            h = DMatrix::identity(n, n);
            fresh = true;
            p = -g.clone();
            slope = g.dot(&p);
        }

        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let trial = &x + &p * alpha;
            let (ft, gt) = fg(trial.as_slice());
            if ft.is_finite() && ft <= f + 1e-4 * alpha * slope {
                accepted = Some((trial, ft, DVector::from_vec(gt)));
                break;
            }
            alpha *= 0.5;
        }
        let Some((x_new, f_new, g_new)) = accepted else {
            if fresh {
                // no descent along the gradient: stationary to working precision
                converged = g.norm() < 1e-6 * (1.0 + f.abs());
                break;
            }
            h = DMatrix::identity(n, n);
            fresh = true;
            continue;
        };

        let s = &x_new - &x;
        let y = &g_new - &g;
        let sy = s.dot(&y);
        if sy > 1e-12 * s.norm() * y.norm() {
            if fresh {
                h *= sy / y.dot(&y);
            }
            let rho = 1.0 / sy;
            let hy = &h * &y;
            let yhy = y.dot(&hy);
            // H ← (I − ρ s yᵀ) H (I − ρ y sᵀ) + ρ s sᵀ, expanded
            h += (&s * s.transpose()) * (rho * rho * yhy + rho)
                - (&hy * s.transpose() + &s * hy.transpose()) * rho;
            fresh = false;
        }

        let df = (f - f_new).abs() / f.abs().max(1e-300);
        residual = s.norm();
        x = x_new;
        f = f_new;
        g = g_new;
        history.push(f);
        if df < tol.f_rel && residual < tol.step {
            converged = true;
            break;
        }
    }

    Minimum { x: x.as_slice().to_vec(), f, iterations, converged, residual, history }
}

pub fn nelder_mead<F>(mut f: F, x0: &[f64], scale: &[f64], tol: Tolerances) -> Minimum
where
    F: FnMut(&[f64]) -> f64,
{
    let n = x0.len();
    let mut simplex: Vec<Vec<f64>> = vec![x0.to_vec()];
    for i in 0..n {
        let mut v = x0.to_vec();
        v[i] += scale[i];
        simplex.push(v);
    }
    let mut values: Vec<f64> = simplex.iter().map(|v| f(v)).collect();
    let mut history = vec![values[0]];
    let mut iterations = 0;
    let mut converged = false;
    let mut diameter = f64::INFINITY;

    while iterations < tol.max_iter {
        iterations += 1;
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        values = order.iter().map(|&i| values[i]).collect();
        history.push(values[0]);

        diameter = simplex[1..]
            .iter()
            .map(|v| v.iter().zip(&simplex[0]).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt())
            .fold(0.0, f64::max);
        let spread = (values[n] - values[0]).abs();
        if diameter < tol.step && spread <= tol.f_rel * values[0].abs().max(1e-300) {
            converged = true;
            break;
        }

        let centroid: Vec<f64> = (0..n)
            .map(|j| simplex[..n].iter().map(|v| v[j]).sum::<f64>() / n as f64)
            .collect();
        let along = |t: f64| -> Vec<f64> {
            centroid.iter().zip(&simplex[n]).map(|(c, w)| c + t * (w - c)).collect()
        };
        let xr = along(-1.0);
        let fr = f(&xr);
        if fr < values[0] {
            let xe = along(-2.0);
            let fe = f(&xe);
            if fe < fr {
                simplex[n] = xe;
                values[n] = fe;
            } else {
                simplex[n] = xr;
                values[n] = fr;
            }
        } else if fr < values[n - 1] {
            simplex[n] = xr;
            values[n] = fr;
        } else {
            let (xc, fc) = if fr < values[n] {
                let xc = along(-0.5);
                let fc = f(&xc);
                (xc, fc)
            } else {
                let xc = along(0.5);
                let fc = f(&xc);
                (xc, fc)
            };
            if fc < values[n].min(fr) {
                simplex[n] = xc;
                values[n] = fc;
            } else {
                for i in 1..=n {
                    let shrunk: Vec<f64> =
                        simplex[i].iter().zip(&simplex[0]).map(|(a, b)| b + 0.5 * (a - b)).collect();
                    values[i] = f(&shrunk);
                    simplex[i] = shrunk;
                }
            }
        }
    }

    let best = (0..=n).min_by(|&a, &b| values[a].total_cmp(&values[b])).unwrap_or(0);
    Minimum {
        x: simplex[best].clone(),
        f: values[best],
        iterations,
        converged,
        residual: diameter,
        history,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rosenbrock(x: &[f64]) -> (f64, Vec<f64>) {
        let (a, b) = (x[0], x[1]);
        let f = (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2);
        let g = vec![-2.0 * (1.0 - a) - 400.0 * a * (b - a * a), 200.0 * (b - a * a)];
        (f, g)
    }

    #[test]
    fn bfgs_rosenbrock() {
        let m = bfgs(rosenbrock, &[-1.2, 1.0], Tolerances::default());
        assert!(m.converged);
        assert!((m.x[0] - 1.0).abs() < 1e-6 && (m.x[1] - 1.0).abs() < 1e-6, "{:?}", m.x);
        assert!(m.history.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn nelder_mead_quadratic() {
        let f = |x: &[f64]| (x[0] - 3.0).powi(2) + 2.0 * (x[1] + 1.0).powi(2) + 1.0;
        let tol = Tolerances { step: 1e-9, f_rel: 1e-14, ..Tolerances::default() };
        let m = nelder_mead(f, &[0.0, 0.0], &[1.0, 1.0], tol);
        assert!(m.converged);
        assert!((m.x[0] - 3.0).abs() < 1e-6 && (m.x[1] + 1.0).abs() < 1e-6);
    }
}
