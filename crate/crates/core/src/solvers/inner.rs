//! Unconstrained minimization by gradient descent with Armijo backtracking
//! and Barzilai-Borwein initial steps. Near the noise floor of the value an
//! approximate Wolfe test on the slope stands in for Armijo.

use super::SolverError;
use crate::cone::{dot, norm};

const ARMIJO_C: f64 = 1e-4;
/// Approximate Wolfe parameter for steps whose value change is lost in rounding.
const APPROX_DELTA: f64 = 0.1;
/// Relative value noise tolerated by the approximate Wolfe test.
const VALUE_NOISE: f64 = 1e-10;
const MAX_HALVINGS: usize = 60;
/// Consecutive accepted steps improving neither value nor gradient norm
/// before giving up.
const MAX_FLAT_STEPS: usize = 5;

#[derive(Debug, Clone, PartialEq)]
pub struct InnerResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub grad_norm: f64,
    pub iters: usize,
    /// `grad_norm <= tol` was reached (otherwise `max_iter` ran out or the
    /// value stopped decreasing in floating point).
    pub converged: bool,
}

/// Minimizes `phi`, which returns the value and gradient, or `None` outside
/// its domain. Stops when `‖∇phi‖ <= tol` or after `max_iter` iterations.
pub fn inner_minimize<F>(
    phi: F,
    x0: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<InnerResult, SolverError>
where
    F: Fn(&[f64]) -> Option<(f64, Vec<f64>)>,
{
    let (mut f, mut g) = phi(x0).ok_or(SolverError::LineSearchStalled {
        grad_norm: f64::NAN,
    })?;
    let mut x = x0.to_vec();
    let mut prev: Option<(Vec<f64>, Vec<f64>)> = None;
    let mut iters = 0;
    let mut flat = 0;
    loop {
        let gn = norm(&g);
        if gn <= tol || iters >= max_iter || flat >= MAX_FLAT_STEPS {
            return Ok(InnerResult {
                x,
                value: f,
                grad_norm: gn,
                iters,
                converged: gn <= tol,
            });
        }
        let mut step = match &prev {
            Some((s, y)) => {
                let sy = dot(s, y);
                if sy > 0.0 {
                    dot(s, s) / sy
                } else {
                    1.0 / gn
                }
            }
            None => 1.0 / gn.max(1.0),
        };
        let g2 = gn * gn;
        let mut accepted = None;
        for _ in 0..=MAX_HALVINGS {
            let xt: Vec<f64> = x.iter().zip(&g).map(|(a, b)| a - step * b).collect();
            if let Some((ft, gt)) = phi(&xt) {
                let armijo = ft <= f - ARMIJO_C * step * g2;
                // Slope along -g at the trial point, compared with -g2 at x.
                let approx_wolfe = ft <= f + VALUE_NOISE * f.abs()
                    && -dot(&gt, &g) <= (1.0 - 2.0 * APPROX_DELTA) * g2;
                if ft.is_finite() && (armijo || approx_wolfe) {
                    accepted = Some((xt, ft, gt));
                    break;
                }
            }
            step *= 0.5;
        }
        let Some((xn, fnew, gnew)) = accepted else {
            return Err(SolverError::LineSearchStalled { grad_norm: gn });
        };
        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gnew.iter().zip(&g).map(|(a, b)| a - b).collect();
        prev = Some((s, y));
        flat = if fnew < f || norm(&gnew) < gn { 0 } else { flat + 1 };
        x = xn;
        f = fnew;
        g = gnew;
        iters += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_reaches_center() {
        let a = [1.0, -2.0, 3.0];
        let phi = |x: &[f64]| {
            let d: Vec<f64> = x.iter().zip(&a).map(|(xi, ai)| xi - ai).collect();
            Some((dot(&d, &d), d.iter().map(|v| 2.0 * v).collect()))
        };
        let r = inner_minimize(phi, &[0.0; 3], 1e-10, 1000).unwrap();
        assert!(r.converged);
        for (xi, ai) in r.x.iter().zip(&a) {
            assert!((xi - ai).abs() < 1e-9);
        }
    }

    #[test]
    fn rosenbrock() {
        let phi = |x: &[f64]| {
            let (a, b) = (x[0], x[1]);
            let f = (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2);
            let g = vec![
                -2.0 * (1.0 - a) - 400.0 * a * (b - a * a),
                200.0 * (b - a * a),
            ];
            Some((f, g))
        };
        let r = inner_minimize(phi, &[-1.2, 1.0], 1e-6, 100_000).unwrap();
        assert!(r.converged, "{r:?}");
        assert!(r.grad_norm <= 1e-6);
        assert!((r.x[0] - 1.0).abs() < 1e-4 && (r.x[1] - 1.0).abs() < 1e-4);
    }

    #[test]
    fn unbounded_linear_hits_iteration_cap() {
        let phi = |x: &[f64]| Some((x[0], vec![1.0]));
        let r = inner_minimize(phi, &[0.0], 1e-8, 50).unwrap();
        assert!(!r.converged);
        assert_eq!(r.iters, 50);
    }

    #[test]
    fn flat_value_stops_early() {
        // Gradient never vanishes but the value cannot decrease.
        let phi = |_: &[f64]| Some((1e20, vec![1.0]));
        let r = inner_minimize(phi, &[0.0], 1e-8, 1000).unwrap();
        assert!(!r.converged);
        assert_eq!(r.iters, MAX_FLAT_STEPS);
    }

    #[test]
    fn no_descent_stalls() {
        // Reports a gradient that does not match the function.
        let phi = |x: &[f64]| Some((x[0] * x[0], vec![-1.0]));
        assert!(matches!(
            inner_minimize(phi, &[0.0], 1e-8, 10),
            Err(SolverError::LineSearchStalled { .. })
        ));
    }
}
