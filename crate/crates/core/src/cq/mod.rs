//! Analyzers for the constraint qualifications of the NSOCP hierarchy.
//!
//! Exact rank tests decide nondegeneracy; Robinson's CQ is decided by a slice
//! search; the weak and sequential conditions are probed along directional
//! sequences and in shrinking neighborhoods, so their HOLDS verdicts are
//! search-certified while VIOLATED verdicts carry concrete witnesses.

mod family;
mod seq;
mod weak;

use std::cell::{OnceCell, RefCell};
use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use family::{build_family_d, SubsetSelection, NEARBY_LD_TOL};

use crate::cone::{eigenvector, norm, project, SocVector};
use crate::model::{
    classify_values, hat_jacobian, jac_t_columns, jac_t_mul, ConeProgram, IndexClassification,
    ModelError, PointEval, CLASSIFY_TOL,
};
use crate::rank::{
    conic_li_certificate, numeric_rank, ConeBlock, ConicLi, SearchBudget, PLD_TOL, RANK_TOL,
};

/// Eigenvector choices `w̄_j` for blocks in `I0`, keyed by 0-based block.
pub type SliceChoice = BTreeMap<usize, Vec<f64>>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CqName {
    Ndg,
    Robinson,
    WeakNdg,
    WeakRobinson,
    WeakCrcq,
    WeakCpld,
    SeqCrcq,
    SeqCpld,
    Kkt,
}

impl CqName {
    pub const ALL: [CqName; 9] = [
        CqName::Ndg,
        CqName::Robinson,
        CqName::WeakNdg,
        CqName::WeakRobinson,
        CqName::WeakCrcq,
        CqName::WeakCpld,
        CqName::SeqCrcq,
        CqName::SeqCpld,
        CqName::Kkt,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            CqName::Ndg => "ndg",
            CqName::Robinson => "robinson",
            CqName::WeakNdg => "weak-ndg",
            CqName::WeakRobinson => "weak-robinson",
            CqName::WeakCrcq => "weak-crcq",
            CqName::WeakCpld => "weak-cpld",
            CqName::SeqCrcq => "seq-crcq",
            CqName::SeqCpld => "seq-cpld",
            CqName::Kkt => "kkt",
        }
    }
}

impl fmt::Display for CqName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CqName {
    type Err = CqError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key = s.trim().to_ascii_lowercase();
        CqName::ALL
            .into_iter()
            .find(|c| c.as_str() == key)
            .ok_or_else(|| CqError::UnknownCq(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum CqStatus {
    Holds,
    Violated,
    Undecided,
}

impl CqStatus {
    /// The boolean a fixture's expected table would carry, if decided.
    pub fn as_bool(self) -> Option<bool> {
        match self {
            CqStatus::Holds => Some(true),
            CqStatus::Violated => Some(false),
            CqStatus::Undecided => None,
        }
    }
}

impl fmt::Display for CqStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CqStatus::Holds => "HOLDS",
            CqStatus::Violated => "VIOLATED",
            CqStatus::Undecided => "UNDECIDED",
        })
    }
}

/// Concrete evidence behind a VIOLATED verdict.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Witness {
    /// Base direction `d` of the sequence `x^k = x̄ + t_k d`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub direction: Option<Vec<f64>>,
    /// Step schedule `t_k` over the examined tail.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub steps: Vec<f64>,
    pub slices: SliceChoice,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub subsets: Option<SubsetSelection>,
    /// Nonzero cone vector in the kernel, one entry per active block.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cone_vector: Option<Vec<Vec<f64>>>,
    pub evidence: BTreeMap<String, f64>,
}

/// Evidence behind a HOLDS verdict.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    /// Worst degeneracy seen (conditioning or dependence margin); `None`
    /// when nothing was measured.
    pub degeneracy: Option<f64>,
    pub samples: usize,
    /// The decision is exact rather than the result of a finite search.
    pub exhaustive: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CqVerdict {
    pub cq: CqName,
    pub status: CqStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<Witness>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub certificate: Option<Certificate>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl CqVerdict {
    pub fn holds(cq: CqName, certificate: Certificate) -> Self {
        Self {
            cq,
            status: CqStatus::Holds,
            witness: None,
            certificate: Some(certificate),
            note: None,
        }
    }

    pub fn violated(cq: CqName, witness: Witness) -> Self {
        Self {
            cq,
            status: CqStatus::Violated,
            witness: Some(witness),
            certificate: None,
            note: None,
        }
    }

    pub fn undecided(cq: CqName, note: impl Into<String>) -> Self {
        Self {
            cq,
            status: CqStatus::Undecided,
            witness: None,
            certificate: None,
            note: Some(note.into()),
        }
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = Some(note.into());
        self
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CqError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("{count} active blocks exceed the subset enumeration cap of {cap}")]
    SubsetCapExceeded { count: usize, cap: usize },
    #[error("constraint {block} is in JB but ĝ vanishes there")]
    ZeroHatOnBoundary { block: usize },
    #[error("no eigenvector choice supplied for constraint {block}")]
    MissingSlice { block: usize },
    #[error("constraint {block} out of range (q = {q})")]
    BlockOutOfRange { block: usize, q: usize },
    #[error("unknown constraint qualification '{0}'")]
    UnknownCq(String),
}

/// Tolerances and search effort for the analyzers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CqOptions {
    pub classify_tol: f64,
    pub rank_tol: f64,
    pub pld_tol: f64,
    pub budget: SearchBudget,
    /// Sequences use `t_k = 2^-k` for `k = 1..=k_max`.
    pub k_max: usize,
    /// Number of final steps that must keep a dependence.
    pub tail: usize,
    pub random_directions: usize,
    /// Largest `|IB| + |I0|` for subset enumeration.
    pub subset_cap: usize,
    /// Cap on eigenvector choices examined per sequence.
    pub max_choices: usize,
}

impl Default for CqOptions {
    fn default() -> Self {
        Self {
            classify_tol: CLASSIFY_TOL,
            rank_tol: RANK_TOL,
            pld_tol: PLD_TOL,
            budget: SearchBudget::default(),
            k_max: 30,
            tail: 10,
            random_directions: 16,
            subset_cap: 12,
            max_choices: 512,
        }
    }
}

impl CqOptions {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.budget.seed = seed;
        self
    }
}

/// Analyzer bound to one feasible point. Probe sequences and candidate
/// eigenvector choices are computed once and shared by all conditions, so
/// verdicts for different conditions are mutually consistent.
pub struct Analyzer<'a, P: ConeProgram + ?Sized> {
    p: &'a P,
    x: Vec<f64>,
    eval: PointEval,
    idx: IndexClassification,
    opts: CqOptions,
    probes: OnceCell<Vec<weak::Probe>>,
    base_candidates: OnceCell<Vec<SliceChoice>>,
    all_candidates: OnceCell<Vec<SliceChoice>>,
    verdicts: RefCell<BTreeMap<CqName, CqVerdict>>,
}

impl<'a, P: ConeProgram + ?Sized> Analyzer<'a, P> {
    pub fn new(p: &'a P, x: &[f64], opts: CqOptions) -> Result<Self, CqError> {
        if x.len() != p.n() {
            return Err(ModelError::DimensionMismatch {
                expected: p.n(),
                got: x.len(),
            }
            .into());
        }
        let eval = p.evaluate(x)?;
        let idx = classify_values(&eval.g, opts.classify_tol)?;
        Ok(Self {
            p,
            x: x.to_vec(),
            eval,
            idx,
            opts,
            probes: OnceCell::new(),
            base_candidates: OnceCell::new(),
            all_candidates: OnceCell::new(),
            verdicts: RefCell::new(BTreeMap::new()),
        })
    }

    pub fn classification(&self) -> &IndexClassification {
        &self.idx
    }

    pub fn point(&self) -> &[f64] {
        &self.x
    }

    /// Verdict for one condition (cached).
    pub fn check(&self, cq: CqName) -> Result<CqVerdict, CqError> {
        if let Some(v) = self.verdicts.borrow().get(&cq) {
            return Ok(v.clone());
        }
        let v = match cq {
            CqName::Ndg => self.nondegeneracy(),
            CqName::Robinson => self.robinson(),
            CqName::WeakNdg | CqName::WeakRobinson | CqName::WeakCrcq | CqName::WeakCpld => {
                self.check_cap(cq)?;
                weak::verdict(self, cq)
            }
            CqName::SeqCrcq | CqName::SeqCpld => {
                self.check_cap(cq)?;
                seq::verdict(self, cq)?
            }
            CqName::Kkt => self.kkt_existence(),
        };
        self.verdicts.borrow_mut().insert(cq, v.clone());
        Ok(v)
    }

    fn check_cap(&self, cq: CqName) -> Result<(), CqError> {
        let count = self.idx.ib.len() + self.idx.i0.len();
        let needs_subsets = matches!(
            cq,
            CqName::WeakCrcq | CqName::WeakCpld | CqName::SeqCrcq | CqName::SeqCpld
        );
        if needs_subsets && count > self.opts.subset_cap {
            return Err(CqError::SubsetCapExceeded {
                count,
                cap: self.opts.subset_cap,
            });
        }
        Ok(())
    }

    /// `Dg_jᵀu1(g_j)` for each `j ∈ IB`, i.e. `Dg_jᵀΓg_j / (2 g_{j,0})`.
    fn boundary_vectors(&self) -> Vec<Vec<f64>> {
        self.idx
            .ib
            .iter()
            .map(|&j| {
                let g = &self.eval.g[j];
                let hn = g.hat_norm();
                let w: Vec<f64> = g.yhat().iter().map(|v| v / hn).collect();
                jac_t_mul(&self.eval.jac[j], &eigenvector(&w, -1.0))
            })
            .collect()
    }

    fn nondegeneracy(&self) -> CqVerdict {
        let mut vs = self.boundary_vectors();
        for &j in &self.idx.i0 {
            vs.extend(jac_t_columns(&self.eval.jac[j]));
        }
        let need = vs.len();
        let rank = numeric_rank(&vs, self.opts.rank_tol);
        if rank == need {
            CqVerdict::holds(
                CqName::Ndg,
                Certificate {
                    degeneracy: (need > 0).then(|| family::conditioning(&vs)),
                    samples: 1,
                    exhaustive: true,
                },
            )
        } else {
            let mut w = Witness::default();
            w.evidence.insert("rank".into(), rank as f64);
            w.evidence.insert("required".into(), need as f64);
            CqVerdict::violated(CqName::Ndg, w)
        }
    }

    fn robinson(&self) -> CqVerdict {
        let mut blocks: Vec<ConeBlock> = self
            .boundary_vectors()
            .into_iter()
            .map(ConeBlock::Halfline)
            .collect();
        for &j in &self.idx.i0 {
            blocks.push(ConeBlock::Lorentz(jac_t_columns(&self.eval.jac[j])));
        }
        let starts: Vec<Vec<Vec<f64>>> = self
            .all_candidates()
            .iter()
            .map(|c| self.idx.i0.iter().map(|j| c[j].clone()).collect())
            .collect();
        match conic_li_certificate(&blocks, self.opts.pld_tol, &self.opts.budget, &starts) {
            ConicLi::Independent {
                min_margin,
                samples,
                exhaustive,
            } => CqVerdict::holds(
                CqName::Robinson,
                Certificate {
                    degeneracy: min_margin.is_finite().then_some(min_margin),
                    samples,
                    exhaustive,
                },
            ),
            ConicLi::Undecided { min_margin, samples } => CqVerdict::undecided(
                CqName::Robinson,
                format!("best slice residual {min_margin:.3} thresholds after {samples} samples"),
            ),
            ConicLi::Dependent { v, slices, residual } => {
                if self.nondegeneracy().status == CqStatus::Holds {
                    return CqVerdict::undecided(
                        CqName::Robinson,
                        "conic dependence found on a linearly independent family",
                    );
                }
                let nb = self.idx.ib.len();
                let mut w = Witness {
                    cone_vector: Some(v),
                    ..Witness::default()
                };
                for (pos, &j) in self.idx.i0.iter().enumerate() {
                    if let Some(s) = &slices[nb + pos] {
                        w.slices.insert(j, s.clone());
                    }
                }
                w.evidence.insert("residual".into(), residual);
                CqVerdict::violated(CqName::Robinson, w)
            }
        }
    }

    /// Whether KKT multipliers exist at the point: minimizes
    /// `‖∇f - Σ Dg_jᵀμ_j‖` over multipliers compatible with complementarity.
    fn kkt_existence(&self) -> CqVerdict {
        let n = self.x.len();
        // Columns of the linear map and the cone structure of the unknowns.
        let mut cols: Vec<Vec<f64>> = Vec::new();
        let mut shape: Vec<usize> = Vec::new();
        for v in self.boundary_vectors() {
            let nv = norm(&v).max(1e-300);
            cols.push(v.iter().map(|c| c / nv).collect());
            shape.push(1);
        }
        for &j in &self.idx.i0 {
            let c = jac_t_columns(&self.eval.jac[j]);
            shape.push(c.len());
            cols.extend(c);
        }
        let gf = &self.eval.grad_f;
        let scale = 1.0 + norm(gf);
        let residual_of = |z: &[f64]| -> Vec<f64> {
            let mut r = gf.clone();
            for (c, zi) in cols.iter().zip(z) {
                for (ri, ci) in r.iter_mut().zip(c) {
                    *ri -= zi * ci;
                }
            }
            r
        };
        let mut best = norm(gf);
        if !cols.is_empty() {
            let a = DMatrix::from_fn(n, cols.len(), |i, k| cols[k][i]);
            let lip = a.singular_values().max().powi(2);
            if lip > 0.0 {
                let project_z = |z: &mut [f64]| {
                    let mut at = 0;
                    for &m in &shape {
                        if m == 1 {
                            z[at] = z[at].max(0.0);
                        } else {
                            let y = SocVector::new(z[at..at + m].to_vec()).expect("m >= 2");
                            z[at..at + m].copy_from_slice(project(&y).as_slice());
                        }
                        at += m;
                    }
                };
                let dim = cols.len();
                let mut z = vec![0.0; dim];
                let mut yv = z.clone();
                let mut t = 1.0_f64;
                for _ in 0..20_000 {
                    let r = residual_of(&yv);
                    let grad: Vec<f64> = cols.iter().map(|c| -crate::cone::dot(c, &r)).collect();
                    let mut zn: Vec<f64> =
                        yv.iter().zip(&grad).map(|(y, g)| y - g / lip).collect();
                    project_z(&mut zn);
                    let tn = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
                    yv = zn
                        .iter()
                        .zip(&z)
                        .map(|(a, b)| a + (t - 1.0) / tn * (a - b))
                        .collect();
                    z = zn;
                    t = tn;
                    best = best.min(norm(&residual_of(&z)));
                    if best <= 1e-12 * scale {
                        break;
                    }
                }
            }
        }
        if best <= 1e-6 * scale {
            CqVerdict::holds(
                CqName::Kkt,
                Certificate {
                    degeneracy: Some(best),
                    samples: 1,
                    exhaustive: false,
                },
            )
        } else if best > 1e-3 * scale {
            let mut w = Witness::default();
            w.evidence.insert("min_stationarity".into(), best);
            CqVerdict::violated(CqName::Kkt, w)
        } else {
            CqVerdict::undecided(
                CqName::Kkt,
                format!("smallest stationarity residual {best:e} is inconclusive"),
            )
        }
    }

    /// Rank of the stacked `Dĝ_j(x̄)`, `j ∈ I0`, and its row count.
    fn hat_rank(&self) -> (usize, usize) {
        let rows: Vec<Vec<f64>> = self
            .idx
            .i0
            .iter()
            .flat_map(|&j| jac_t_columns(&hat_jacobian(&self.eval.jac[j])))
            .collect();
        (numeric_rank(&rows, self.opts.rank_tol), rows.len())
    }

    /// Candidates built from grids and local minimizers at `x̄` only.
    pub(crate) fn base_candidates(&self) -> &[SliceChoice] {
        self.base_candidates.get_or_init(|| seq::base_candidates(self))
    }

    /// Base candidates plus sequence limits and weak-condition witnesses.
    pub(crate) fn all_candidates(&self) -> &[SliceChoice] {
        self.all_candidates.get_or_init(|| {
            let mut out = self.base_candidates().to_vec();
            for pr in self.probes() {
                out.push(pr.limit_choice(self));
            }
            for cq in [CqName::WeakCrcq, CqName::WeakCpld, CqName::WeakRobinson] {
                if let Ok(v) = self.check(cq) {
                    if let Some(w) = v.witness {
                        if !w.slices.is_empty() || self.idx.i0.is_empty() {
                            out.push(w.slices);
                        }
                    }
                }
            }
            seq::dedup(out)
        })
    }

    pub(crate) fn probes(&self) -> &[weak::Probe] {
        self.probes.get_or_init(|| weak::build_probes(self))
    }
}

/// Agreement of nondegeneracy with its decomposition into weak-nondegeneracy
/// plus surjectivity of the stacked `Dĝ_j`, `j ∈ I0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NdgDecomposition {
    pub ndg: CqStatus,
    pub weak_ndg: CqStatus,
    pub hat_rank: usize,
    pub hat_rows: usize,
    pub hat_full_row_rank: bool,
    /// `None` when either verdict is undecided.
    pub consistent: Option<bool>,
}

pub fn crosscheck_ndg_decomposition<P: ConeProgram + ?Sized>(
    p: &P,
    x: &[f64],
    opts: &CqOptions,
) -> Result<NdgDecomposition, CqError> {
    crosscheck_with(&Analyzer::new(p, x, opts.clone())?)
}

pub fn crosscheck_with<P: ConeProgram + ?Sized>(
    an: &Analyzer<'_, P>,
) -> Result<NdgDecomposition, CqError> {
    let ndg = an.check(CqName::Ndg)?.status;
    let weak_ndg = an.check(CqName::WeakNdg)?.status;
    let (hat_rank, hat_rows) = an.hat_rank();
    let full = hat_rank == hat_rows;
    let consistent = match (ndg.as_bool(), weak_ndg.as_bool()) {
        (Some(a), Some(b)) => Some(a == (b && full)),
        _ => None,
    };
    Ok(NdgDecomposition {
        ndg,
        weak_ndg,
        hat_rank,
        hat_rows,
        hat_full_row_rank: full,
        consistent,
    })
}

pub fn check_nondegeneracy<P: ConeProgram + ?Sized>(
    p: &P,
    x: &[f64],
    opts: &CqOptions,
) -> Result<CqVerdict, CqError> {
    Analyzer::new(p, x, opts.clone())?.check(CqName::Ndg)
}

pub fn check_robinson<P: ConeProgram + ?Sized>(
    p: &P,
    x: &[f64],
    opts: &CqOptions,
) -> Result<CqVerdict, CqError> {
    Analyzer::new(p, x, opts.clone())?.check(CqName::Robinson)
}

/// Weak-nondegeneracy or weak-Robinson.
pub fn falsify_weak_cq<P: ConeProgram + ?Sized>(
    p: &P,
    x: &[f64],
    variant: CqName,
    opts: &CqOptions,
) -> Result<CqVerdict, CqError> {
    assert!(matches!(variant, CqName::WeakNdg | CqName::WeakRobinson));
    Analyzer::new(p, x, opts.clone())?.check(variant)
}

/// Weak or sequential CRCQ / CPLD.
pub fn falsify_constant_rank<P: ConeProgram + ?Sized>(
    p: &P,
    x: &[f64],
    variant: CqName,
    opts: &CqOptions,
) -> Result<CqVerdict, CqError> {
    assert!(matches!(
        variant,
        CqName::WeakCrcq | CqName::WeakCpld | CqName::SeqCrcq | CqName::SeqCpld
    ));
    Analyzer::new(p, x, opts.clone())?.check(variant)
}

/// Several verdicts at one point through a shared analyzer.
pub fn analyze<P: ConeProgram + ?Sized>(
    p: &P,
    x: &[f64],
    which: &[CqName],
    opts: &CqOptions,
) -> Result<Vec<CqVerdict>, CqError> {
    let an = Analyzer::new(p, x, opts.clone())?;
    which.iter().map(|&c| an.check(c)).collect()
}

/// Implications of the hierarchy, as `(upstream, downstream)`: whenever the
/// upstream condition holds the downstream one must hold too.
pub const HIERARCHY: [(CqName, CqName); 11] = [
    (CqName::Ndg, CqName::Robinson),
    (CqName::Ndg, CqName::WeakNdg),
    (CqName::Ndg, CqName::SeqCrcq),
    (CqName::Robinson, CqName::SeqCpld),
    (CqName::WeakNdg, CqName::WeakRobinson),
    (CqName::WeakNdg, CqName::WeakCrcq),
    (CqName::SeqCrcq, CqName::WeakCrcq),
    (CqName::SeqCrcq, CqName::SeqCpld),
    (CqName::WeakCrcq, CqName::WeakCpld),
    (CqName::WeakRobinson, CqName::WeakCpld),
    (CqName::SeqCpld, CqName::WeakCpld),
];

/// Pairs of verdicts that contradict [`HIERARCHY`] (upstream HOLDS while
/// downstream is VIOLATED).
pub fn hierarchy_violations(verdicts: &[CqVerdict]) -> Vec<(CqName, CqName)> {
    let status = |c: CqName| verdicts.iter().find(|v| v.cq == c).map(|v| v.status);
    HIERARCHY
        .iter()
        .filter(|(up, down)| {
            status(*up) == Some(CqStatus::Holds) && status(*down) == Some(CqStatus::Violated)
        })
        .copied()
        .collect()
}

#[cfg(test)]
mod tests;
