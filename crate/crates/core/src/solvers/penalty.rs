//! External penalty and augmented Lagrangian methods. Both minimize
//!
//! ```text
//! f(x) + (ρ/2) Σ_j ( ‖P(μ̃_j/ρ - g_j(x))‖² - ‖μ̃_j/ρ‖² )
//! ```
//!
//! with `μ̃ = 0` for the penalty method, and read off `μ_j = P(μ̃_j - ρ g_j)`
//! and `Δ_j = (μ_j - μ̃_j)/ρ`, so that `g_j + Δ_j = P(ρ g_j - μ̃_j)/ρ ∈ L`
//! and `⟨g_j + Δ_j, μ_j⟩ = 0` hold exactly.

use super::{check_start, inner_minimize, max_norm, multiplier_divergence, SolveResult, SolverConfig, SolverError, SolverStatus};
use crate::cone::{norm, project, SocVector};
use crate::model::{jac_t_mul, kkt_residual_at, lagrangian_grad_at, ConeProgram, IterateLog, PointEval};

fn zero_shifts(eval: &PointEval) -> Vec<SocVector> {
    eval.g
        .iter()
        .map(|g| SocVector::zeros(g.dim()).expect("m >= 2"))
        .collect()
}

/// Value and gradient of the shifted penalty at an evaluated point, together
/// with the multiplier estimates `μ_j = P(μ̃_j - ρ g_j)`.
fn shifted(eval: &PointEval, rho: f64, mu_tilde: &[SocVector]) -> (f64, Vec<f64>, Vec<SocVector>) {
    let mut value = eval.f;
    let mut grad = eval.grad_f.clone();
    let mut mu = Vec::with_capacity(eval.g.len());
    for ((g, jac), mt) in eval.g.iter().zip(&eval.jac).zip(mu_tilde) {
        let s = mt.scale(1.0 / rho);
        let p = project(&s.sub(g));
        value += 0.5 * rho * (p.dot(&p) - s.dot(&s));
        let m = p.scale(rho);
        for (gi, t) in grad.iter_mut().zip(jac_t_mul(jac, m.as_slice())) {
            *gi -= t;
        }
        mu.push(m);
    }
    (value, grad, mu)
}

/// Penalized (or augmented Lagrangian, when `mu_tilde` is given) objective.
pub fn penalty_value<P: ConeProgram + ?Sized>(
    p: &P,
    x: &[f64],
    rho: f64,
    mu_tilde: Option<&[SocVector]>,
) -> Result<f64, SolverError> {
    let eval = p.evaluate(x)?;
    let zeros = zero_shifts(&eval);
    Ok(shifted(&eval, rho, mu_tilde.unwrap_or(&zeros)).0)
}

/// Gradient of [`penalty_value`].
pub fn penalty_gradient<P: ConeProgram + ?Sized>(
    p: &P,
    x: &[f64],
    rho: f64,
    mu_tilde: Option<&[SocVector]>,
) -> Result<Vec<f64>, SolverError> {
    let eval = p.evaluate(x)?;
    let zeros = zero_shifts(&eval);
    Ok(shifted(&eval, rho, mu_tilde.unwrap_or(&zeros)).1)
}

/// Radial scaling into the box `‖μ‖_∞ <= bound`; keeps `μ` in the cone.
fn safeguard(mu: &SocVector, bound: f64) -> SocVector {
    let m = mu.as_slice().iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    if m <= bound {
        mu.clone()
    } else {
        mu.scale(bound / m)
    }
}

pub fn penalty_solve<P: ConeProgram + ?Sized>(
    p: &P,
    x0: &[f64],
    cfg: &SolverConfig,
) -> Result<SolveResult, SolverError> {
    outer_loop(p, x0, cfg, false)
}

pub fn auglag_solve<P: ConeProgram + ?Sized>(
    p: &P,
    x0: &[f64],
    cfg: &SolverConfig,
) -> Result<SolveResult, SolverError> {
    outer_loop(p, x0, cfg, true)
}

fn outer_loop<P: ConeProgram + ?Sized>(
    p: &P,
    x0: &[f64],
    cfg: &SolverConfig,
    augmented: bool,
) -> Result<SolveResult, SolverError> {
    check_start(p, x0, cfg)?;
    let mut x = x0.to_vec();
    let first = p.evaluate(&x)?;
    let mut mu_tilde = zero_shifts(&first);
    let mut mu = mu_tilde.clone();
    let mut rho = cfg.rho0;
    let mut prev_measure = f64::INFINITY;
    let mut logs: Vec<IterateLog> = Vec::new();
    let finish = |status, x: Vec<f64>, mu, logs, note: Option<String>| SolveResult {
        status,
        x,
        mu,
        logs,
        note,
    };

    for k in 1..=cfg.max_outer {
        let tol = cfg.inner_tol(k);
        let phi = |z: &[f64]| {
            let e = p.evaluate(z).ok()?;
            let (v, g, _) = shifted(&e, rho, &mu_tilde);
            Some((v, g))
        };
        let inner = match inner_minimize(phi, &x, tol, cfg.inner_max_iter) {
            Ok(r) => r,
            Err(SolverError::LineSearchStalled { grad_norm }) => {
                let note = format!("inner line search stalled with gradient norm {grad_norm:e}");
                return Ok(finish(SolverStatus::LineSearchStalled, x, mu, logs, Some(note)));
            }
            Err(e) => return Err(e),
        };
        x = inner.x;
        if norm(&x) > cfg.max_x_norm {
            return Ok(finish(SolverStatus::DivergingIterates, x, mu, logs, None));
        }
        let eval = p.evaluate(&x)?;
        let (_, aug_grad, new_mu) = shifted(&eval, rho, &mu_tilde);
        mu = new_mu;
        let lag_grad = lagrangian_grad_at(&eval, &mu)?;
        let gap = aug_grad
            .iter()
            .zip(&lag_grad)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        let jac_scale = eval.jac.iter().map(|j| j.norm()).fold(0.0, f64::max);
        if gap > 1e-10 * (1.0 + norm(&eval.grad_f) + jac_scale * max_norm(&mu)) {
            return Err(SolverError::GradientIdentity { gap });
        }
        let delta: Vec<SocVector> = mu
            .iter()
            .zip(&mu_tilde)
            .map(|(m, mt)| m.sub(mt).scale(1.0 / rho))
            .collect();
        let residuals = kkt_residual_at(&eval, &mu)?;
        logs.push(IterateLog {
            k,
            x: x.clone(),
            mu: mu.clone(),
            delta: Some(delta),
            residuals,
            rho,
            inner_iters: inner.iters,
        });
        // Below this the penalty gradient is dominated by rounding in x and g.
        let g_scale = eval.g.iter().map(SocVector::norm).fold(0.0, f64::max);
        let floor = 4.0 * f64::EPSILON * rho * jac_scale * (jac_scale * norm(&x) + g_scale);
        if let Some(note) = multiplier_divergence(&logs, cfg.multiplier_cap) {
            return Ok(finish(SolverStatus::MultiplierDivergence, x, mu, logs, Some(note)));
        }
        if residuals.stationarity <= cfg.stationarity_tol.max(tol).max(floor)
            && residuals.feasibility <= cfg.feasibility_tol
            && residuals.complementarity <= cfg.feasibility_tol
            && (inner.converged || inner.grad_norm <= floor)
        {
            return Ok(finish(SolverStatus::Converged, x, mu, logs, None));
        }
        if augmented {
            let measure = residuals.feasibility + residuals.complementarity;
            if measure > 0.5 * prev_measure {
                rho *= cfg.rho_growth;
            }
            prev_measure = measure;
            mu_tilde = mu.iter().map(|m| safeguard(m, cfg.multiplier_box)).collect();
        } else {
            rho *= cfg.rho_growth;
        }
    }
    Ok(finish(SolverStatus::IterationLimit, x, mu, logs, None))
}
