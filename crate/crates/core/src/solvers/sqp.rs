//! SQP with a merit-function line search. Each step solves
//!
//! ```text
//! min_d ∇f(x)ᵀd + ½ dᵀd   s.t.  g_j(x) + Dg_j(x) d ∈ L
//! ```
//!
//! by the augmented Lagrangian method, updates the merit weight `α` from the
//! subproblem multipliers and backtracks on `Φ_α`.

use super::{auglag_solve, check_start, multiplier_divergence, SolveResult, SolverConfig, SolverError, SolverStatus};
use crate::cone::{dot, norm, SocVector};
use crate::model::{kkt_residual_at, ConeProgram, IterateLog, ModelError, PointEval};

const MAX_HALVINGS: usize = 60;

/// The linearized subproblem at one iterate, with `M = I`.
struct Subproblem<'a> {
    eval: &'a PointEval,
}

impl ConeProgram for Subproblem<'_> {
    fn n(&self) -> usize {
        self.eval.grad_f.len()
    }

    fn cone_dims(&self) -> Vec<usize> {
        self.eval.g.iter().map(SocVector::dim).collect()
    }

    fn evaluate(&self, d: &[f64]) -> Result<PointEval, ModelError> {
        let e = self.eval;
        let f = dot(&e.grad_f, d) + 0.5 * dot(d, d);
        let grad_f = e.grad_f.iter().zip(d).map(|(a, b)| a + b).collect();
        let g = e
            .g
            .iter()
            .zip(&e.jac)
            .map(|(gj, jac)| {
                let lin: Vec<f64> = (0..jac.nrows())
                    .map(|r| gj.as_slice()[r] + (0..jac.ncols()).map(|c| jac[(r, c)] * d[c]).sum::<f64>())
                    .collect();
                SocVector::new(lin)
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(PointEval {
            f,
            grad_f,
            g,
            jac: e.jac.clone(),
        })
    }
}

/// `Φ_α(x) = f(x) + α Σ_j [-λ1(g_j(x))]_+`; with `paper_literal` the
/// printed measure `[-g_{j,0} - ‖ĝ_j‖]_+ = [-λ2]_+` is used instead.
pub fn violation_phi<P: ConeProgram + ?Sized>(
    p: &P,
    x: &[f64],
    alpha: f64,
    paper_literal: bool,
) -> Result<f64, ModelError> {
    let e = p.evaluate(x)?;
    let v: f64 = e
        .g
        .iter()
        .map(|g| {
            let lam = if paper_literal { g.lambda2() } else { g.lambda1() };
            (-lam).max(0.0)
        })
        .sum();
    Ok(e.f + alpha * v)
}

/// Backtracking from `t = 1` by halving until
/// `Φ(x) - Φ(x + t d) >= σ t dᵀMd`, or `<=` with `paper_literal`.
pub fn armijo_step<F>(
    phi: F,
    x: &[f64],
    d: &[f64],
    d_m_d: f64,
    sigma: f64,
    paper_literal: bool,
) -> Result<f64, SolverError>
where
    F: Fn(&[f64]) -> Option<f64>,
{
    let f0 = phi(x).ok_or(SolverError::LineSearchStalled { grad_norm: norm(d) })?;
    let mut t = 1.0;
    for _ in 0..=MAX_HALVINGS {
        let xt: Vec<f64> = x.iter().zip(d).map(|(a, b)| a + t * b).collect();
        if let Some(ft) = phi(&xt).filter(|v| v.is_finite()) {
            let decrease = f0 - ft;
            let ok = if paper_literal {
                decrease <= sigma * t * d_m_d
            } else {
                decrease >= sigma * t * d_m_d
            };
            if ok {
                return Ok(t);
            }
        }
        t *= 0.5;
    }
    Err(SolverError::LineSearchStalled { grad_norm: norm(d) })
}

fn subproblem_config(cfg: &SolverConfig) -> SolverConfig {
    SolverConfig {
        stationarity_tol: 1e-11,
        feasibility_tol: 1e-11,
        inner_tol_floor: 1e-11,
        multiplier_box: 1e12,
        multiplier_cap: f64::INFINITY,
        max_outer: 60,
        ..cfg.clone()
    }
}

pub fn sqp_solve<P: ConeProgram + ?Sized>(
    p: &P,
    x0: &[f64],
    cfg: &SolverConfig,
) -> Result<SolveResult, SolverError> {
    check_start(p, x0, cfg)?;
    let params = &cfg.sqp;
    let qp_cfg = subproblem_config(cfg);
    let mut x = x0.to_vec();
    let mut alpha = params.alpha0;
    let mut logs: Vec<IterateLog> = Vec::new();
    let mut mu: Vec<SocVector> = Vec::new();
    let done = |status, x, mu, logs, note: Option<String>| {
        Ok(SolveResult {
            status,
            x,
            mu,
            logs,
            note,
        })
    };

    for k in 1..=cfg.max_outer {
        let eval = p.evaluate(&x)?;
        let sub = Subproblem { eval: &eval };
        let qp = auglag_solve(&sub, &vec![0.0; x.len()], &qp_cfg)?;
        let qp_feas = qp.logs.last().map_or(f64::INFINITY, |l| l.residuals.feasibility);
        if qp.status != SolverStatus::Converged && qp_feas > 1e-6 {
            let note = format!("linearized constraints infeasible (violation {qp_feas:e})");
            return done(SolverStatus::SubproblemInfeasible, x, mu, logs, Some(note));
        }
        let d = qp.x;
        mu = qp.mu;
        let delta: Vec<SocVector> = eval
            .jac
            .iter()
            .map(|jac| {
                let v = jac * nalgebra::DVector::from_column_slice(&d);
                SocVector::new(v.iter().copied().collect())
            })
            .collect::<Result<Vec<_>, _>>()
            .map_err(ModelError::from)?;
        let residuals = kkt_residual_at(&eval, &mu)?;
        logs.push(IterateLog {
            k,
            x: x.clone(),
            mu: mu.clone(),
            delta: Some(delta),
            residuals,
            rho: alpha,
            inner_iters: qp.logs.iter().map(|l| l.inner_iters).sum(),
        });
        let dn = norm(&d);
        if dn <= cfg.stationarity_tol {
            return done(SolverStatus::Converged, x, mu, logs, None);
        }
        if let Some(note) = multiplier_divergence(&logs, cfg.multiplier_cap) {
            return done(SolverStatus::MultiplierDivergence, x, mu, logs, Some(note));
        }
        let m0 = mu.iter().map(|m| m.y0().abs()).fold(0.0, f64::max);
        if alpha < m0 {
            alpha = alpha.max(m0) + params.tau;
        }
        let phi = |z: &[f64]| violation_phi(p, z, alpha, params.paper_literal).ok();
        let t = match armijo_step(phi, &x, &d, dn * dn, params.sigma, params.paper_literal) {
            Ok(t) => t,
            Err(_) => {
                let note = "merit line search failed along the SQP direction".to_string();
                return done(SolverStatus::LineSearchStalled, x, mu, logs, Some(note));
            }
        };
        for (xi, di) in x.iter_mut().zip(&d) {
            *xi += t * di;
        }
        if norm(&x) > cfg.max_x_norm {
            return done(SolverStatus::DivergingIterates, x, mu, logs, None);
        }
    }
    done(SolverStatus::IterationLimit, x, mu, logs, None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{akkt_check, ProblemSpec};

    fn halfline() -> ProblemSpec {
        ProblemSpec::parse("halfline-min", 1, "x1", &[vec!["x1", "1"]]).unwrap()
    }

    #[test]
    fn phi_examples() {
        let p = halfline();
        // Feasible: Φ = f.
        assert_eq!(violation_phi(&p, &[3.0], 5.0, false).unwrap(), 3.0);
        // g = (0, 1): λ1 = -1.
        assert_eq!(violation_phi(&p, &[0.0], 2.0, false).unwrap(), 2.0);
        assert_eq!(violation_phi(&p, &[0.0], 0.0, false).unwrap(), 0.0);
        // The printed measure vanishes at this infeasible point.
        assert_eq!(violation_phi(&p, &[0.0], 2.0, true).unwrap(), 0.0);
    }

    #[test]
    fn armijo_cases() {
        let q = |z: &[f64]| Some(z[0] * z[0]);
        assert_eq!(armijo_step(q, &[1.0], &[-1.0], 1.0, 0.1, false).unwrap(), 1.0);
        assert!(armijo_step(q, &[1.0], &[1.0], 1.0, 0.1, false).is_err());
        let p = halfline();
        let phi = |z: &[f64]| violation_phi(&p, z, 1.0, false).ok();
        let t = armijo_step(phi, &[5.0], &[-4.0], 16.0, 0.1, false).unwrap();
        let dec = phi(&[5.0]).unwrap() - phi(&[5.0 - 4.0 * t]).unwrap();
        assert!(t > 0.0 && t <= 1.0 && dec >= 0.1 * t * 16.0);
    }

    #[test]
    fn sqp_halfline() {
        let r = sqp_solve(&halfline(), &[5.0], &SolverConfig::default()).unwrap();
        assert_eq!(r.status, SolverStatus::Converged);
        assert!((r.x[0] - 1.0).abs() < 1e-5);
        let m = r.mu[0].as_slice();
        assert!((m[0] - 1.0).abs() < 1e-4 && (m[1] + 1.0).abs() < 1e-4, "{m:?}");
        assert!(akkt_check(&halfline(), &r.logs, 1e-6).unwrap().holds);
    }

    #[test]
    fn sqp_stops_at_kkt_point() {
        let r = sqp_solve(&halfline(), &[1.0], &SolverConfig::default()).unwrap();
        assert_eq!(r.status, SolverStatus::Converged);
        assert_eq!(r.logs.len(), 1);
    }
}
