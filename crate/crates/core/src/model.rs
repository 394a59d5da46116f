//! Problem representation, point evaluation, index classification and
//! KKT / AKKT residuals.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cone::{self, classify, norm, project, ConeError, ConeMembership, SocVector};
use crate::expr::{self, Expr, ExprError};

/// Default tolerance for the partition `I0 / IB / Iint`.
pub const CLASSIFY_TOL: f64 = 1e-7;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("objective: {0}")]
    Objective(ExprError),
    #[error("constraint {block}, component {component}: {source}")]
    Component {
        block: usize,
        component: usize,
        source: ExprError,
    },
    #[error("constraint {block} has dimension {dim}; cone constraints need dimension >= 2")]
    BlockTooSmall { block: usize, dim: usize },
    #[error("constraint {block} declares dim {dim} but lists {components} components")]
    ComponentCount {
        block: usize,
        dim: usize,
        components: usize,
    },
    #[error("problem needs n >= 1 and at least one constraint")]
    Empty,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("point is infeasible: constraint {block} has λ1 = {violation:e}")]
    InfeasiblePoint { block: usize, violation: f64 },
    #[error("iterate {k} carries no perturbations")]
    MissingPerturbations { k: usize },
    #[error("need at least {needed} iterates, got {got}")]
    TooFewIterates { needed: usize, got: usize },
    #[error(transparent)]
    Cone(#[from] ConeError),
}

/// Everything the analyzers and solvers need at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct PointEval {
    pub f: f64,
    pub grad_f: Vec<f64>,
    pub g: Vec<SocVector>,
    /// `Dg_j`, an `m_j × n` matrix per block.
    pub jac: Vec<DMatrix<f64>>,
}

/// A smooth cone program `min f(x) s.t. g_j(x) ∈ L^{m_j}`.
pub trait ConeProgram {
    fn n(&self) -> usize;
    fn cone_dims(&self) -> Vec<usize>;
    fn evaluate(&self, x: &[f64]) -> Result<PointEval, ModelError>;
}

/// One constraint `g_j(x) ∈ L^{m_j}` given componentwise.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintBlock {
    pub components: Vec<Expr>,
}

impl ConstraintBlock {
    pub fn dim(&self) -> usize {
        self.components.len()
    }
}

/// An NSOCP instance declared by expressions.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemSpec {
    pub name: String,
    pub n: usize,
    pub objective: Expr,
    pub constraints: Vec<ConstraintBlock>,
    pub points_of_interest: Vec<Vec<f64>>,
    /// Known verdicts, keyed by CQ name.
    pub expected: BTreeMap<String, bool>,
}

impl ProblemSpec {
    /// Builds a problem from expression text.
    pub fn parse(
        name: &str,
        n: usize,
        objective: &str,
        constraints: &[Vec<&str>],
    ) -> Result<Self, ModelError> {
        if n == 0 || constraints.is_empty() {
            return Err(ModelError::Empty);
        }
        let objective = expr::parse(objective, n).map_err(ModelError::Objective)?;
        let constraints = constraints
            .iter()
            .enumerate()
            .map(|(j, comps)| {
                if comps.len() < 2 {
                    return Err(ModelError::BlockTooSmall {
                        block: j,
                        dim: comps.len(),
                    });
                }
                let components = comps
                    .iter()
                    .enumerate()
                    .map(|(i, text)| {
                        expr::parse(text, n).map_err(|source| ModelError::Component {
                            block: j,
                            component: i,
                            source,
                        })
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                Ok(ConstraintBlock { components })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            name: name.to_string(),
            n,
            objective,
            constraints,
            points_of_interest: Vec::new(),
            expected: BTreeMap::new(),
        })
    }

    /// `g_j(x)` for every block, without derivatives.
    pub fn constraint_values(&self, x: &[f64]) -> Result<Vec<SocVector>, ModelError> {
        self.check_dim(x)?;
        self.constraints
            .iter()
            .enumerate()
            .map(|(j, b)| {
                let vals = b
                    .components
                    .iter()
                    .enumerate()
                    .map(|(i, e)| {
                        e.eval(x).map_err(|source| ModelError::Component {
                            block: j,
                            component: i,
                            source,
                        })
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                Ok(SocVector::new(vals)?)
            })
            .collect()
    }

    pub fn objective_value(&self, x: &[f64]) -> Result<f64, ModelError> {
        self.check_dim(x)?;
        self.objective.eval(x).map_err(ModelError::Objective)
    }

    fn check_dim(&self, x: &[f64]) -> Result<(), ModelError> {
        if x.len() != self.n {
            return Err(ModelError::DimensionMismatch {
                expected: self.n,
                got: x.len(),
            });
        }
        Ok(())
    }
}

impl ConeProgram for ProblemSpec {
    fn n(&self) -> usize {
        self.n
    }

    fn cone_dims(&self) -> Vec<usize> {
        self.constraints.iter().map(ConstraintBlock::dim).collect()
    }

    fn evaluate(&self, x: &[f64]) -> Result<PointEval, ModelError> {
        self.check_dim(x)?;
        let obj = self.objective.eval_dual(x).map_err(ModelError::Objective)?;
        let mut g = Vec::with_capacity(self.constraints.len());
        let mut jac = Vec::with_capacity(self.constraints.len());
        for (j, block) in self.constraints.iter().enumerate() {
            let m = block.dim();
            let mut vals = Vec::with_capacity(m);
            let mut d = DMatrix::zeros(m, self.n);
            for (i, e) in block.components.iter().enumerate() {
                let dual = e.eval_dual(x).map_err(|source| ModelError::Component {
                    block: j,
                    component: i,
                    source,
                })?;
                vals.push(dual.value);
                for (c, p) in dual.partials.iter().enumerate() {
                    d[(i, c)] = *p;
                }
            }
            g.push(SocVector::new(vals)?);
            jac.push(d);
        }
        Ok(PointEval {
            f: obj.value,
            grad_f: obj.partials,
            g,
            jac,
        })
    }
}

/// `Dg_jᵀ v` for an `m_j × n` Jacobian.
pub fn jac_t_mul(jac: &DMatrix<f64>, v: &[f64]) -> Vec<f64> {
    (0..jac.ncols())
        .map(|c| (0..jac.nrows()).map(|r| jac[(r, c)] * v[r]).sum())
        .collect()
}

/// Columns of `Dg_jᵀ`, i.e. the gradients of the block's components.
pub fn jac_t_columns(jac: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..jac.nrows()).map(|r| jac.row(r).iter().copied().collect()).collect()
}

/// Partition of the blocks at a point (0-based indices).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexClassification {
    pub i0: Vec<usize>,
    pub ib: Vec<usize>,
    pub iint: Vec<usize>,
    pub tol: f64,
}

pub fn classify_values(g: &[SocVector], tol: f64) -> Result<IndexClassification, ModelError> {
    let mut out = IndexClassification {
        i0: Vec::new(),
        ib: Vec::new(),
        iint: Vec::new(),
        tol,
    };
    for (j, gj) in g.iter().enumerate() {
        match classify(gj, tol) {
            ConeMembership::Origin => out.i0.push(j),
            ConeMembership::BoundaryNonzero => out.ib.push(j),
            ConeMembership::Interior => out.iint.push(j),
            ConeMembership::Outside => {
                return Err(ModelError::InfeasiblePoint {
                    block: j,
                    violation: gj.lambda1(),
                })
            }
        }
    }
    Ok(out)
}

pub fn classify_indices<P: ConeProgram + ?Sized>(
    p: &P,
    x: &[f64],
    tol: f64,
) -> Result<IndexClassification, ModelError> {
    classify_values(&p.evaluate(x)?.g, tol)
}

fn check_mu(eval: &PointEval, mu: &[SocVector]) -> Result<(), ModelError> {
    if mu.len() != eval.g.len() {
        return Err(ModelError::DimensionMismatch {
            expected: eval.g.len(),
            got: mu.len(),
        });
    }
    for (gj, mj) in eval.g.iter().zip(mu) {
        if gj.dim() != mj.dim() {
            return Err(ModelError::DimensionMismatch {
                expected: gj.dim(),
                got: mj.dim(),
            });
        }
    }
    Ok(())
}

/// `∇f(x) - Σ_j Dg_j(x)ᵀ μ_j` from an evaluated point.
pub fn lagrangian_grad_at(eval: &PointEval, mu: &[SocVector]) -> Result<Vec<f64>, ModelError> {
    check_mu(eval, mu)?;
    let mut out = eval.grad_f.clone();
    for (d, m) in eval.jac.iter().zip(mu) {
        for (o, t) in out.iter_mut().zip(jac_t_mul(d, m.as_slice())) {
            *o -= t;
        }
    }
    Ok(out)
}

pub fn lagrangian_grad<P: ConeProgram + ?Sized>(
    p: &P,
    x: &[f64],
    mu: &[SocVector],
) -> Result<Vec<f64>, ModelError> {
    lagrangian_grad_at(&p.evaluate(x)?, mu)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KktResidual {
    /// `‖∇_x L‖`.
    pub stationarity: f64,
    /// `max_j ‖P(-g_j)‖`.
    pub feasibility: f64,
    /// `max_j |⟨μ_j, g_j⟩|`.
    pub complementarity: f64,
}

impl KktResidual {
    pub fn max(&self) -> f64 {
        self.stationarity.max(self.feasibility).max(self.complementarity)
    }

    pub fn is_kkt(&self, tol: f64) -> bool {
        self.max() <= tol
    }
}

pub fn kkt_residual_at(eval: &PointEval, mu: &[SocVector]) -> Result<KktResidual, ModelError> {
    let grad = lagrangian_grad_at(eval, mu)?;
    Ok(KktResidual {
        stationarity: norm(&grad),
        feasibility: eval
            .g
            .iter()
            .map(|g| project(&g.neg()).norm())
            .fold(0.0, f64::max),
        complementarity: eval
            .g
            .iter()
            .zip(mu)
            .map(|(g, m)| g.dot(m).abs())
            .fold(0.0, f64::max),
    })
}

pub fn kkt_residual<P: ConeProgram + ?Sized>(
    p: &P,
    x: &[f64],
    mu: &[SocVector],
) -> Result<KktResidual, ModelError> {
    kkt_residual_at(&p.evaluate(x)?, mu)
}

/// One outer iteration of a solver.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterateLog {
    pub k: usize,
    pub x: Vec<f64>,
    pub mu: Vec<SocVector>,
    /// Perturbations `Δ_j^k` with `g_j(x^k) + Δ_j^k ∈ L`.
    pub delta: Option<Vec<SocVector>>,
    pub residuals: KktResidual,
    /// Penalty parameter (`ρ_k`, or `α_k` for SQP).
    pub rho: f64,
    pub inner_iters: usize,
}

/// Summary of an AKKT audit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AkktReport {
    pub holds: bool,
    pub final_stationarity: f64,
    /// `max_k max_j [-λ1(g_j + Δ_j)]_+`.
    pub max_perturbed_infeasibility: f64,
    /// `max_k max_j |⟨g_j + Δ_j, μ_j⟩|`.
    pub max_perturbed_complementarity: f64,
    /// `max_j ‖Δ_j^k‖` per iterate.
    pub delta_norms: Vec<f64>,
    /// Last `‖Δ‖` is at most the first and at most `eps`.
    pub delta_decreasing: bool,
    /// `max_j ‖μ_j^k‖` per iterate.
    pub mu_norms: Vec<f64>,
}

/// Audits a solver log against the approximate-KKT conditions.
pub fn akkt_check<P: ConeProgram + ?Sized>(
    p: &P,
    logs: &[IterateLog],
    eps: f64,
) -> Result<AkktReport, ModelError> {
    if logs.len() < 2 {
        return Err(ModelError::TooFewIterates {
            needed: 2,
            got: logs.len(),
        });
    }
    let mut max_inf = 0.0_f64;
    let mut max_comp = 0.0_f64;
    let mut delta_norms = Vec::with_capacity(logs.len());
    let mut mu_norms = Vec::with_capacity(logs.len());
    for log in logs {
        let delta = log
            .delta
            .as_ref()
            .ok_or(ModelError::MissingPerturbations { k: log.k })?;
        let g = p.evaluate(&log.x)?.g;
        if delta.len() != g.len() || log.mu.len() != g.len() {
            return Err(ModelError::DimensionMismatch {
                expected: g.len(),
                got: delta.len().min(log.mu.len()),
            });
        }
        let mut dn = 0.0_f64;
        let mut mn = 0.0_f64;
        for ((gj, dj), mj) in g.iter().zip(delta).zip(&log.mu) {
            let shifted = gj.add(dj);
            max_inf = max_inf.max(-shifted.lambda1());
            max_comp = max_comp.max(shifted.dot(mj).abs());
            dn = dn.max(dj.norm());
            mn = mn.max(mj.norm());
        }
        delta_norms.push(dn);
        mu_norms.push(mn);
    }
    let last = logs.last().expect("nonempty");
    let final_stationarity = last.residuals.stationarity;
    let first_d = delta_norms[0];
    let last_d = *delta_norms.last().expect("nonempty");
    Ok(AkktReport {
        holds: final_stationarity <= eps && max_inf <= eps && max_comp <= eps,
        final_stationarity,
        max_perturbed_infeasibility: max_inf.max(0.0),
        max_perturbed_complementarity: max_comp,
        delta_norms,
        delta_decreasing: last_d <= first_d && last_d <= eps,
        mu_norms,
    })
}

/// `ĝ_j` part of the Jacobian: rows `1..m_j` of `Dg_j`.
pub fn hat_jacobian(jac: &DMatrix<f64>) -> DMatrix<f64> {
    jac.rows(1, jac.nrows() - 1).into_owned()
}

/// `P(-y)` norm; zero iff `y` is in the cone.
pub fn cone_violation(y: &SocVector) -> f64 {
    cone::project(&y.neg()).norm()
}
