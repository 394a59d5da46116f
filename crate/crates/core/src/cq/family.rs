//! The vector families `D_{JB,J-,J+}(x, w)` and the dependence tests applied
//! to them.

use serde::{Deserialize, Serialize};

use super::{CqError, SliceChoice};
use crate::cone::{eigenvector, HAT_ZERO_TOL};
use crate::model::{jac_t_mul, ConeProgram, PointEval};
use crate::rank::{
    min_norm_point, numeric_rank, pld_threshold, singular_values, FamilyKind, FamilyLabel,
    VectorFamily,
};

/// Absolute rank floor used at points near, but not at, the base point.
pub const NEARBY_LD_TOL: f64 = 1e-12;

/// Subsets `JB ⊆ IB` and `J-, J+ ⊆ I0` (0-based block indices).
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubsetSelection {
    pub jb: Vec<usize>,
    pub jminus: Vec<usize>,
    pub jplus: Vec<usize>,
}

impl SubsetSelection {
    pub fn is_empty(&self) -> bool {
        self.jb.is_empty() && self.jminus.is_empty() && self.jplus.is_empty()
    }

    pub(crate) fn from_labels(labels: &[FamilyLabel]) -> Self {
        let mut s = Self::default();
        for l in labels {
            match l.kind {
                FamilyKind::B => s.jb.push(l.block),
                FamilyKind::Minus => s.jminus.push(l.block),
                FamilyKind::Plus => s.jplus.push(l.block),
            }
        }
        s
    }

    pub(crate) fn labels(&self) -> Vec<FamilyLabel> {
        let tag = |kind| move |&block| FamilyLabel { block, kind };
        self.jb
            .iter()
            .map(tag(FamilyKind::B))
            .chain(self.jminus.iter().map(tag(FamilyKind::Minus)))
            .chain(self.jplus.iter().map(tag(FamilyKind::Plus)))
            .collect()
    }
}

/// One member of `D` at an evaluated point, or `None` when a `B` member has
/// `ĝ_j(x) = 0`.
pub(crate) fn member(eval: &PointEval, label: FamilyLabel, w: &SliceChoice) -> Option<Vec<f64>> {
    let j = label.block;
    let jac = &eval.jac[j];
    match label.kind {
        FamilyKind::B => {
            let g = &eval.g[j];
            let hn = g.hat_norm();
            if hn <= HAT_ZERO_TOL {
                return None;
            }
            let dir: Vec<f64> = g.yhat().iter().map(|v| v / hn).collect();
            Some(jac_t_mul(jac, &eigenvector(&dir, -1.0)))
        }
        FamilyKind::Minus | FamilyKind::Plus => {
            let s = if label.kind == FamilyKind::Minus { -1.0 } else { 1.0 };
            let wj = w.get(&j)?;
            let mut v = Vec::with_capacity(wj.len() + 1);
            v.push(1.0);
            v.extend(wj.iter().map(|x| s * x));
            Some(jac_t_mul(jac, &v))
        }
    }
}

pub(crate) fn family_at(
    eval: &PointEval,
    labels: &[FamilyLabel],
    w: &SliceChoice,
) -> Result<VectorFamily, CqError> {
    let mut fam = VectorFamily::default();
    for &l in labels {
        let v = member(eval, l, w).ok_or(match l.kind {
            FamilyKind::B => CqError::ZeroHatOnBoundary { block: l.block },
            _ => CqError::MissingSlice { block: l.block },
        })?;
        fam.push(l, v);
    }
    Ok(fam)
}

/// `D_{JB,J-,J+}(x, w)`.
pub fn build_family_d<P: ConeProgram + ?Sized>(
    p: &P,
    x: &[f64],
    sel: &SubsetSelection,
    w: &SliceChoice,
) -> Result<VectorFamily, CqError> {
    let eval = p.evaluate(x)?;
    for &j in sel.jb.iter().chain(&sel.jminus).chain(&sel.jplus) {
        if j >= eval.g.len() {
            return Err(CqError::BlockOutOfRange { block: j, q: eval.g.len() });
        }
    }
    family_at(&eval, &sel.labels(), w)
}

/// `setndg(x, w)`: `D_{IB, I0, I0}`.
pub(crate) fn ndg_labels(ib: &[usize], i0: &[usize]) -> Vec<FamilyLabel> {
    SubsetSelection {
        jb: ib.to_vec(),
        jminus: i0.to_vec(),
        jplus: i0.to_vec(),
    }
    .labels()
}

/// Three-way outcome of a dependence test with a gray zone.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Dep {
    Independent,
    Dependent,
    Gray,
}

/// Linear dependence at the base point (relative rank test).
pub(crate) fn ld_at_base(vs: &[Vec<f64>], rank_tol: f64) -> bool {
    !vs.is_empty() && numeric_rank(vs, rank_tol) < vs.len()
}

/// Positive linear dependence at the base point. A family is only called
/// PLD when it is also rank deficient, so LI always implies PLI.
pub(crate) fn pld_at_base(vs: &[Vec<f64>], rank_tol: f64, pld_tol: f64) -> (Dep, f64) {
    if !ld_at_base(vs, rank_tol) {
        return (Dep::Independent, f64::INFINITY);
    }
    let thr = pld_threshold(vs, pld_tol);
    let r = min_norm_point(vs).residual;
    let dep = if r <= thr {
        Dep::Dependent
    } else if r <= 10.0 * thr {
        Dep::Gray
    } else {
        Dep::Independent
    };
    (dep, r / thr)
}

/// Linear dependence at points near the base point, where the family moves
/// by tiny amounts: an absolute floor on the smallest singular value.
pub(crate) fn ld_nearby(vs: &[Vec<f64>]) -> bool {
    if vs.is_empty() {
        return false;
    }
    let n = vs[0].len();
    if vs.len() > n {
        return true;
    }
    let s = singular_values(vs);
    let smax = s.first().copied().unwrap_or(0.0);
    let smin = s.last().copied().unwrap_or(0.0);
    smin <= NEARBY_LD_TOL * smax.max(1.0)
}

/// `σ_min / σ_max`, zero for families with more members than dimensions.
pub(crate) fn conditioning(vs: &[Vec<f64>]) -> f64 {
    if vs.is_empty() {
        return 1.0;
    }
    if vs.len() > vs[0].len() {
        return 0.0;
    }
    let s = singular_values(vs);
    let smax = s[0];
    if smax <= 0.0 {
        return 0.0;
    }
    s[s.len() - 1] / smax
}
