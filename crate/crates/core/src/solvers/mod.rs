//! External penalty, augmented Lagrangian and SQP methods. Every method emits
//! one [`IterateLog`] per outer iteration so runs can be audited for AKKT.

mod inner;
mod penalty;
mod sqp;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use inner::{inner_minimize, InnerResult};
pub use penalty::{auglag_solve, penalty_gradient, penalty_solve, penalty_value};
pub use sqp::{armijo_step, sqp_solve, violation_phi};

use crate::cone::SocVector;
use crate::model::{IterateLog, ModelError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Penalty,
    Auglag,
    Sqp,
}

impl std::str::FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "penalty" => Ok(Method::Penalty),
            "auglag" => Ok(Method::Auglag),
            "sqp" => Ok(Method::Sqp),
            other => Err(format!("unknown method '{other}' (penalty, auglag, sqp)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SqpParams {
    pub alpha0: f64,
    pub sigma: f64,
    pub gamma1: f64,
    pub gamma2: f64,
    pub tau: f64,
    /// Use the printed step rule and violation measure instead of the
    /// sufficient-decrease rule and `[-λ1]_+`.
    pub paper_literal: bool,
}

impl Default for SqpParams {
    fn default() -> Self {
        Self {
            alpha0: 1.0,
            sigma: 0.1,
            gamma1: 1e-3,
            gamma2: 1e3,
            tau: 1.0,
            paper_literal: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub method: Method,
    pub rho0: f64,
    pub rho_growth: f64,
    pub max_outer: usize,
    /// Inner tolerance at outer step `k` is `max(inner_tol_floor, inner_tol_base^k)`.
    pub inner_tol_floor: f64,
    pub inner_tol_base: f64,
    pub inner_max_iter: usize,
    pub stationarity_tol: f64,
    pub feasibility_tol: f64,
    /// Safeguard box for augmented Lagrangian multiplier estimates.
    pub multiplier_box: f64,
    /// Multiplier norm beyond which a run at a feasible point is reported as
    /// diverging multipliers.
    pub multiplier_cap: f64,
    pub max_x_norm: f64,
    pub sqp: SqpParams,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            method: Method::Auglag,
            rho0: 1.0,
            rho_growth: 10.0,
            max_outer: 50,
            inner_tol_floor: 1e-8,
            inner_tol_base: 0.1,
            inner_max_iter: 100_000,
            stationarity_tol: 1e-8,
            feasibility_tol: 1e-8,
            multiplier_box: 1e6,
            multiplier_cap: 1e6,
            max_x_norm: 1e8,
            sqp: SqpParams::default(),
        }
    }
}

impl SolverConfig {
    pub fn with_method(mut self, method: Method) -> Self {
        self.method = method;
        self
    }

    fn inner_tol(&self, k: usize) -> f64 {
        self.inner_tol_base.powi(k as i32).max(self.inner_tol_floor)
    }

    pub fn validate(&self) -> Result<(), SolverError> {
        let bad = |what: &str| Err(SolverError::InvalidConfig(what.to_string()));
        if !(self.rho0 > 0.0) {
            return bad("rho0 must be positive");
        }
        if !(self.rho_growth > 1.0) {
            return bad("rho_growth must exceed 1");
        }
        if self.max_outer == 0 {
            return bad("max_outer must be positive");
        }
        let s = &self.sqp;
        if !(s.alpha0 > 0.0) || !(s.sigma > 0.0 && s.sigma < 1.0) || !(s.tau > 0.0) {
            return bad("sqp parameters need alpha0 > 0, sigma in (0,1), tau > 0");
        }
        if !(s.gamma1 > 0.0 && s.gamma1 <= 1.0 && s.gamma2 >= 1.0) {
            return bad("sqp gammas must bracket the identity metric");
        }
        Ok(())
    }
}

/// How a run ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolverStatus {
    /// KKT residuals within tolerance.
    Converged,
    IterationLimit,
    /// Feasible and nearly stationary, but multipliers exceed the cap.
    MultiplierDivergence,
    DivergingIterates,
    SubproblemInfeasible,
    LineSearchStalled,
}

impl SolverStatus {
    /// CLI exit code: 0 success, 2 iteration limit, 3 infeasibility or divergence.
    pub fn exit_code(self) -> i32 {
        match self {
            SolverStatus::Converged => 0,
            SolverStatus::IterationLimit => 2,
            _ => 3,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("line search stalled after 60 halvings (gradient norm {grad_norm:e})")]
    LineSearchStalled { grad_norm: f64 },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("augmented Lagrangian gradient identity off by {gap:e}")]
    GradientIdentity { gap: f64 },
    #[error("x0 has length {got}, expected {expected}")]
    StartDimension { expected: usize, got: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveResult {
    pub status: SolverStatus,
    pub x: Vec<f64>,
    pub mu: Vec<SocVector>,
    pub logs: Vec<IterateLog>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

/// Runs the configured method.
pub fn solve<P: crate::model::ConeProgram + ?Sized>(
    p: &P,
    x0: &[f64],
    cfg: &SolverConfig,
) -> Result<SolveResult, SolverError> {
    match cfg.method {
        Method::Penalty => penalty_solve(p, x0, cfg),
        Method::Auglag => auglag_solve(p, x0, cfg),
        Method::Sqp => sqp_solve(p, x0, cfg),
    }
}

/// Iterates over which growing multipliers are read as divergence.
const DIVERGENCE_WINDOW: usize = 5;

/// Reports diverging multipliers at a nearly feasible, nearly stationary
/// iterate: the norm exceeds `cap`, or it rose at each of the last
/// [`DIVERGENCE_WINDOW`] iterates by a total factor of at least 10.
fn multiplier_divergence(logs: &[IterateLog], cap: f64) -> Option<String> {
    let last = logs.last()?;
    let r = &last.residuals;
    if r.feasibility > 1e-6 || r.stationarity > 1e-6 {
        return None;
    }
    let norms: Vec<f64> = logs.iter().map(|l| max_norm(&l.mu)).collect();
    let now = norms[norms.len() - 1];
    if now > cap {
        return Some(format!("multiplier norm {now:e} exceeds {cap:e} at a nearly feasible point"));
    }
    if norms.len() < DIVERGENCE_WINDOW {
        return None;
    }
    let tail = &norms[norms.len() - DIVERGENCE_WINDOW..];
    let rising = tail.windows(2).all(|w| w[1] > w[0]);
    if rising && now >= 10.0 * tail[0] {
        return Some(format!(
            "multiplier norm grew from {:e} to {now:e} over the last {DIVERGENCE_WINDOW} iterates at a nearly feasible point",
            tail[0]
        ));
    }
    None
}

fn max_norm(v: &[SocVector]) -> f64 {
    v.iter().map(SocVector::norm).fold(0.0, f64::max)
}

fn check_start<P: crate::model::ConeProgram + ?Sized>(
    p: &P,
    x0: &[f64],
    cfg: &SolverConfig,
) -> Result<(), SolverError> {
    cfg.validate()?;
    if x0.len() != p.n() {
        return Err(SolverError::StartDimension {
            expected: p.n(),
            got: x0.len(),
        });
    }
    Ok(())
}
