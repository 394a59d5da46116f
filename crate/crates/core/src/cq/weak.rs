//! Weak conditions, probed along directional sequences `x^k = x̄ + 2^-k d`.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::family::{self, Dep};
use super::{Analyzer, Certificate, CqName, CqVerdict, SliceChoice, SubsetSelection, Witness};
use crate::cone::{norm, HAT_ZERO_TOL};
use crate::model::{hat_jacobian, jac_t_columns, ConeProgram, PointEval};
use crate::rank::{normalize, random_unit, slice_grid_size, sphere_grid, singular_values};

/// Eigenvector behavior of one `I0` block along a sequence.
pub(crate) enum BlockLimit {
    /// `ĝ_j(x^k) ≠ 0`: eigenvectors are determined, with tail values and limit.
    Forced { limit: Vec<f64>, tail: Vec<Vec<f64>> },
    /// `ĝ_j(x^k) = 0` throughout: any unit vector is admissible.
    Free,
}

pub(crate) struct Probe {
    pub direction: Vec<f64>,
    pub steps: Vec<f64>,
    pub tail: Vec<PointEval>,
    /// Aligned with `I0`.
    pub limits: Vec<BlockLimit>,
}

impl Probe {
    /// Forced limits, with free blocks set to their first grid point.
    pub(crate) fn limit_choice<P: ConeProgram + ?Sized>(&self, an: &Analyzer<'_, P>) -> SliceChoice {
        an.idx
            .i0
            .iter()
            .zip(&self.limits)
            .map(|(&j, l)| match l {
                BlockLimit::Forced { limit, .. } => (j, limit.clone()),
                BlockLimit::Free => (j, slice_grid(an.eval.g[j].dim(), an)[0].clone()),
            })
            .collect()
    }
}

/// Unit vectors of length `m - 1` used as eigenvector choices.
pub(crate) fn slice_grid<P: ConeProgram + ?Sized>(m: usize, an: &Analyzer<'_, P>) -> Vec<Vec<f64>> {
    if m == 2 {
        vec![vec![1.0], vec![-1.0]]
    } else {
        sphere_grid(
            m - 1,
            slice_grid_size(m, an.opts.budget.grid_factor),
            an.opts.budget.seed,
        )
    }
}

/// Sphere grid in `R^n` plus seeded random directions.
pub(crate) fn direction_set<P: ConeProgram + ?Sized>(an: &Analyzer<'_, P>) -> Vec<Vec<f64>> {
    let n = an.x.len();
    let count = match n {
        1 => 2,
        2 => 16,
        3 => 32,
        _ => (8usize << n.min(5)).min(256),
    };
    let mut dirs = sphere_grid(n, count, an.opts.budget.seed);
    let mut rng = ChaCha8Rng::seed_from_u64(an.opts.budget.seed ^ 0xd1ec_7100);
    for _ in 0..an.opts.random_directions {
        dirs.push(random_unit(&mut rng, n));
    }
    dirs
}

/// Directions `d` with `Dĝ_j(x̄) d` aligned with candidate eigenvectors.
fn targeted_directions<P: ConeProgram + ?Sized>(an: &Analyzer<'_, P>) -> Vec<Vec<f64>> {
    if an.idx.i0.is_empty() {
        return Vec::new();
    }
    let rows: Vec<Vec<f64>> = an
        .idx
        .i0
        .iter()
        .flat_map(|&j| jac_t_columns(&hat_jacobian(&an.eval.jac[j])))
        .collect();
    let n = an.x.len();
    let h = DMatrix::from_fn(rows.len(), n, |i, c| rows[i][c]);
    let Ok(pinv) = h.pseudo_inverse(1e-12) else {
        return Vec::new();
    };
    let mut out = Vec::new();
    for cand in an.base_candidates().iter().take(64) {
        let rhs: Vec<f64> = an.idx.i0.iter().flat_map(|j| cand[j].clone()).collect();
        let d = &pinv * nalgebra::DVector::from_vec(rhs);
        let d: Vec<f64> = d.iter().copied().collect();
        if norm(&d) > 1e-12 {
            let d = normalize(&d);
            out.push(d.iter().map(|v| -v).collect());
            out.push(d);
        }
    }
    out
}

fn push_unique(dirs: &mut Vec<Vec<f64>>, d: Vec<f64>) {
    let dup = dirs
        .iter()
        .any(|e| e.iter().zip(&d).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max) <= 1e-12);
    if !dup {
        dirs.push(d);
    }
}

pub(crate) fn build_probes<P: ConeProgram + ?Sized>(an: &Analyzer<'_, P>) -> Vec<Probe> {
    let mut dirs = Vec::new();
    for d in direction_set(an).into_iter().chain(targeted_directions(an)) {
        push_unique(&mut dirs, d);
    }
    dirs.into_iter().filter_map(|d| probe_along(an, d)).collect()
}

fn probe_along<P: ConeProgram + ?Sized>(an: &Analyzer<'_, P>, d: Vec<f64>) -> Option<Probe> {
    let k_max = an.opts.k_max;
    let tail_len = an.opts.tail.min(k_max);
    let mut evals = Vec::with_capacity(k_max);
    let mut steps = Vec::with_capacity(k_max);
    for k in 1..=k_max {
        let t = 0.5_f64.powi(k as i32);
        let x: Vec<f64> = an.x.iter().zip(&d).map(|(a, b)| a + t * b).collect();
        evals.push(an.p.evaluate(&x).ok()?);
        steps.push(t);
    }
    let limits = an
        .idx
        .i0
        .iter()
        .map(|&j| {
            let hats: Vec<&[f64]> = evals.iter().map(|e| e.g[j].yhat()).collect();
            if hats.iter().all(|h| norm(h) <= HAT_ZERO_TOL) {
                return BlockLimit::Free;
            }
            let mut dirs: Vec<Option<Vec<f64>>> = hats
                .iter()
                .map(|h| {
                    let nh = norm(h);
                    (nh > 0.0).then(|| h.iter().map(|v| v / nh).collect())
                })
                .collect();
            // Exact zeros inherit the nearest defined direction.
            let first = dirs.iter().flatten().next().cloned().expect("some nonzero");
            let mut last = first;
            for slot in dirs.iter_mut() {
                match slot {
                    Some(v) => last = v.clone(),
                    None => *slot = Some(last.clone()),
                }
            }
            let tail: Vec<Vec<f64>> = dirs[k_max - tail_len..].iter().flatten().cloned().collect();
            let a = &tail[tail.len() - 1];
            let limit = if tail.len() >= 2 {
                let b = &tail[tail.len() - 2];
                let gap = a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
                if gap <= 1e-6 {
                    normalize(&a.iter().zip(b).map(|(x, y)| 2.0 * x - y).collect::<Vec<_>>())
                } else {
                    a.clone()
                }
            } else {
                a.clone()
            };
            BlockLimit::Forced { limit, tail }
        })
        .collect();
    Some(Probe {
        direction: d,
        steps: steps.split_off(k_max - tail_len),
        tail: evals.split_off(k_max - tail_len),
        limits,
    })
}

/// An admissible eigenvector choice along one sequence.
pub(crate) struct Choice {
    pub base: SliceChoice,
    pub tail: Vec<SliceChoice>,
}

fn enumerate_choices<P: ConeProgram + ?Sized>(
    an: &Analyzer<'_, P>,
    probe: &Probe,
    probe_index: usize,
) -> Vec<Choice> {
    let tail_len = probe.tail.len();
    // Per block: list of (limit, tail) options.
    let options: Vec<Vec<(Vec<f64>, Option<&Vec<Vec<f64>>>)>> = an
        .idx
        .i0
        .iter()
        .zip(&probe.limits)
        .map(|(&j, l)| match l {
            BlockLimit::Forced { limit, tail } => vec![(limit.clone(), Some(tail))],
            BlockLimit::Free => slice_grid(an.eval.g[j].dim(), an)
                .into_iter()
                .map(|w| (w, None))
                .collect(),
        })
        .collect();
    let total = options
        .iter()
        .map(Vec::len)
        .try_fold(1usize, |acc, l| acc.checked_mul(l))
        .unwrap_or(usize::MAX);
    let flats: Vec<usize> = if total <= an.opts.max_choices {
        (0..total).collect()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(an.opts.budget.seed ^ (probe_index as u64) << 8);
        let mut picks: Vec<usize> = if total <= 1 << 24 {
            sample(&mut rng, total, an.opts.max_choices).into_vec()
        } else {
            use rand::Rng;
            (0..an.opts.max_choices).map(|_| rng.gen_range(0..total)).collect()
        };
        picks.sort_unstable();
        picks
    };
    flats
        .into_iter()
        .map(|flat| {
            let mut rem = flat;
            let mut base = SliceChoice::new();
            let mut tail = vec![SliceChoice::new(); tail_len];
            for (&j, opts) in an.idx.i0.iter().zip(&options) {
                let (w, t) = &opts[rem % opts.len()];
                rem /= opts.len();
                base.insert(j, w.clone());
                for (k, slot) in tail.iter_mut().enumerate() {
                    slot.insert(j, t.map_or_else(|| w.clone(), |t| t[k].clone()));
                }
            }
            Choice { base, tail }
        })
        .collect()
}

pub(crate) enum Outcome {
    /// The choice satisfies the condition; carries a degeneracy measure.
    Good(f64),
    Gray,
    Bad {
        subset: Option<SubsetSelection>,
        evidence: BTreeMap<String, f64>,
    },
}

fn evaluate_choice<P: ConeProgram + ?Sized>(
    an: &Analyzer<'_, P>,
    cq: CqName,
    probe: &Probe,
    choice: &Choice,
) -> Outcome {
    let labels = family::ndg_labels(&an.idx.ib, &an.idx.i0);
    let base: Vec<Vec<f64>> = labels
        .iter()
        .map(|&l| family::member(&an.eval, l, &choice.base).expect("base family"))
        .collect();
    match cq {
        CqName::WeakNdg => {
            let c = family::conditioning(&base);
            if family::ld_at_base(&base, an.opts.rank_tol) {
                let mut evidence = BTreeMap::new();
                evidence.insert("conditioning".into(), c);
                Outcome::Bad {
                    subset: None,
                    evidence,
                }
            } else {
                Outcome::Good(c)
            }
        }
        CqName::WeakRobinson => {
            match family::pld_at_base(&base, an.opts.rank_tol, an.opts.pld_tol) {
                (Dep::Independent, margin) => Outcome::Good(margin),
                (Dep::Gray, _) => Outcome::Gray,
                (Dep::Dependent, margin) => {
                    let mut evidence = BTreeMap::new();
                    evidence.insert("pld_margin".into(), margin);
                    Outcome::Bad {
                        subset: None,
                        evidence,
                    }
                }
            }
        }
        CqName::WeakCrcq | CqName::WeakCpld => {
            constant_rank_outcome(an, cq == CqName::WeakCpld, &labels, &base, probe, choice)
        }
        _ => unreachable!("not a weak condition"),
    }
}

/// Subset masks over `len` members with at most `max_size` bits, ordered by size.
pub(crate) fn subset_masks(len: usize, max_size: usize) -> Vec<u64> {
    let mut masks: Vec<u64> = (1u64..(1u64 << len))
        .filter(|m| m.count_ones() as usize <= max_size)
        .collect();
    masks.sort_by_key(|m| (m.count_ones(), *m));
    masks
}

pub(crate) fn pick(vs: &[Vec<f64>], mask: u64) -> Vec<Vec<f64>> {
    vs.iter()
        .enumerate()
        .filter(|(i, _)| mask >> i & 1 == 1)
        .map(|(_, v)| v.clone())
        .collect()
}

pub(crate) fn pick_labels(labels: &[crate::rank::FamilyLabel], mask: u64) -> SubsetSelection {
    let chosen: Vec<_> = labels
        .iter()
        .enumerate()
        .filter(|(i, _)| mask >> i & 1 == 1)
        .map(|(_, l)| *l)
        .collect();
    SubsetSelection::from_labels(&chosen)
}

fn constant_rank_outcome<P: ConeProgram + ?Sized>(
    an: &Analyzer<'_, P>,
    positive: bool,
    labels: &[crate::rank::FamilyLabel],
    base: &[Vec<f64>],
    probe: &Probe,
    choice: &Choice,
) -> Outcome {
    let mut tail: Vec<Vec<Vec<f64>>> = Vec::with_capacity(probe.tail.len());
    for (eval, w) in probe.tail.iter().zip(&choice.tail) {
        let mut vs = Vec::with_capacity(labels.len());
        for &l in labels {
            match family::member(eval, l, w) {
                Some(v) => vs.push(v),
                None => return Outcome::Gray,
            }
        }
        tail.push(vs);
    }
    // Subsets larger than n are dependent everywhere, so they never break
    // persistence.
    let n = an.x.len();
    let mut persistent: Vec<u64> = Vec::new();
    let mut gray = false;
    for mask in subset_masks(labels.len(), n) {
        if persistent.iter().any(|p| mask & p == *p) {
            continue;
        }
        let sub = pick(base, mask);
        let dep = if positive {
            family::pld_at_base(&sub, an.opts.rank_tol, an.opts.pld_tol).0
        } else if family::ld_at_base(&sub, an.opts.rank_tol) {
            Dep::Dependent
        } else {
            Dep::Independent
        };
        if dep == Dep::Independent {
            continue;
        }
        let li_at = tail.iter().position(|vs| !family::ld_nearby(&pick(vs, mask)));
        match (li_at, dep) {
            (None, Dep::Dependent) => persistent.push(mask),
            (None, _) => {}
            (Some(_), Dep::Gray) => gray = true,
            (Some(k), _) => {
                let s = singular_values(&pick(&tail[k], mask));
                let mut evidence = BTreeMap::new();
                evidence.insert("base_sigma_min".into(), *singular_values(&sub).last().unwrap_or(&0.0));
                evidence.insert("tail_sigma_min".into(), *s.last().unwrap_or(&0.0));
                evidence.insert("tail_step".into(), probe.steps[k]);
                return Outcome::Bad {
                    subset: Some(pick_labels(labels, mask)),
                    evidence,
                };
            }
        }
    }
    if gray {
        Outcome::Gray
    } else {
        Outcome::Good(family::conditioning(base))
    }
}

pub(crate) fn verdict<P: ConeProgram + ?Sized>(an: &Analyzer<'_, P>, cq: CqName) -> CqVerdict {
    let probes = an.probes();
    if probes.is_empty() {
        return CqVerdict::undecided(cq, "no probe sequence could be evaluated");
    }
    let mut gray = false;
    let mut samples = 0usize;
    let mut worst = f64::INFINITY;
    for (pi, probe) in probes.iter().enumerate() {
        let mut good = None;
        let mut seq_gray = false;
        let mut first_bad = None;
        for choice in enumerate_choices(an, probe, pi) {
            samples += 1;
            match evaluate_choice(an, cq, probe, &choice) {
                Outcome::Good(q) => {
                    good = Some(q);
                    break;
                }
                Outcome::Gray => seq_gray = true,
                Outcome::Bad { subset, evidence } => {
                    if first_bad.is_none() {
                        first_bad = Some((subset, evidence, choice.base));
                    }
                }
            }
        }
        if let Some(q) = good {
            worst = worst.min(q);
            continue;
        }
        if seq_gray {
            gray = true;
            continue;
        }
        let (subsets, evidence, slices) = first_bad.expect("at least one choice");
        return CqVerdict::violated(
            cq,
            Witness {
                direction: Some(probe.direction.clone()),
                steps: probe.steps.clone(),
                slices,
                subsets,
                cone_vector: None,
                evidence,
            },
        );
    }
    if gray {
        return CqVerdict::undecided(cq, "a dependence test fell in the gray zone");
    }
    CqVerdict::holds(
        cq,
        Certificate {
            degeneracy: worst.is_finite().then_some(worst),
            samples,
            exhaustive: false,
        },
    )
    .with_note("search-certified over directional sequences")
}
