//! Sequential conditions in their neighborhood form: for every `w̄`, each
//! subset dependent at `(x̄, w̄)` must stay dependent for all `(x, w)` close
//! to `(x̄, w̄)`, with `w` free.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::family::{self, Dep};
use super::weak::{direction_set, pick, pick_labels, slice_grid, subset_masks};
use super::{Analyzer, Certificate, CqError, CqName, CqStatus, CqVerdict, SliceChoice, Witness};
use crate::model::{ConeProgram, PointEval};
use crate::rank::{normalize, random_unit, FamilyLabel};

const MAX_GRID_CANDIDATES: usize = 1024;
const MAX_SEARCH_SUBSETS: usize = 256;
const PERTURBATIONS: usize = 4;

fn product(grids: &[Vec<Vec<f64>>], cap: usize, seed: u64) -> Vec<Vec<Vec<f64>>> {
    let total = grids
        .iter()
        .map(Vec::len)
        .try_fold(1usize, |a, l| a.checked_mul(l))
        .unwrap_or(usize::MAX);
    let at = |mut flat: usize| -> Vec<Vec<f64>> {
        grids
            .iter()
            .map(|g| {
                let w = g[flat % g.len()].clone();
                flat /= g.len();
                w
            })
            .collect()
    };
    if total <= cap {
        (0..total).map(at).collect()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9a1d);
        (0..cap)
            .map(|_| grids.iter().map(|g| g[rng.gen_range(0..g.len())].clone()).collect())
            .collect()
    }
}

/// Removes near-duplicate choices, keeping first occurrences.
pub(crate) fn dedup(v: Vec<SliceChoice>) -> Vec<SliceChoice> {
    let mut out: Vec<SliceChoice> = Vec::with_capacity(v.len());
    for c in v {
        let dup = out.iter().any(|o| {
            o.len() == c.len()
                && o.iter().zip(&c).all(|((ja, a), (jb, b))| {
                    ja == jb && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= 1e-9)
                })
        });
        if !dup {
            out.push(c);
        }
    }
    out
}

/// Coordinate pattern search on a product of unit spheres.
fn pattern_search(
    f: &dyn Fn(&SliceChoice) -> f64,
    mut cur: SliceChoice,
    blocks: &[usize],
) -> (SliceChoice, f64) {
    let mut fc = f(&cur);
    let mut h = 0.25;
    let mut evals = 0;
    while h > 1e-10 && evals < 4000 && fc > 0.0 {
        let mut improved = false;
        'scan: for &j in blocks {
            let w = cur[&j].clone();
            for i in 0..w.len() {
                let mut t: Vec<f64> = w.iter().map(|wi| -w[i] * wi).collect();
                t[i] += 1.0;
                let nt = crate::cone::norm(&t);
                if nt < 1e-8 {
                    continue;
                }
                for s in [1.0, -1.0] {
                    let trial_w: Vec<f64> =
                        normalize(&w.iter().zip(&t).map(|(a, b)| a + s * h * b / nt).collect::<Vec<_>>());
                    let mut trial = cur.clone();
                    trial.insert(j, trial_w);
                    let ft = f(&trial);
                    evals += 1;
                    if ft < fc {
                        cur = trial;
                        fc = ft;
                        improved = true;
                        break 'scan;
                    }
                }
            }
        }
        if !improved {
            h *= 0.5;
        }
    }
    (cur, fc)
}

fn members(eval: &PointEval, labels: &[FamilyLabel], w: &SliceChoice) -> Option<Vec<Vec<f64>>> {
    labels.iter().map(|&l| family::member(eval, l, w)).collect()
}

/// Grid choices plus local minimizers of the dependence measures of every
/// small subset of `setndg(x̄, w)`.
pub(crate) fn base_candidates<P: ConeProgram + ?Sized>(an: &Analyzer<'_, P>) -> Vec<SliceChoice> {
    let i0 = &an.idx.i0;
    if i0.is_empty() {
        return vec![SliceChoice::new()];
    }
    let seed = an.opts.budget.seed;
    let grids: Vec<Vec<Vec<f64>>> = i0
        .iter()
        .map(|&j| slice_grid(an.eval.g[j].dim(), an))
        .collect();
    let to_choice = |ws: Vec<Vec<f64>>| -> SliceChoice { i0.iter().copied().zip(ws).collect() };
    let mut out: Vec<SliceChoice> = product(&grids, MAX_GRID_CANDIDATES, seed)
        .into_iter()
        .map(to_choice)
        .collect();
    let default: SliceChoice = i0.iter().zip(&grids).map(|(&j, g)| (j, g[0].clone())).collect();

    let labels = family::ndg_labels(&an.idx.ib, i0);
    let n = an.x.len();
    for mask in subset_masks(labels.len(), n + 1)
        .into_iter()
        .take(MAX_SEARCH_SUBSETS)
    {
        let sub_labels: Vec<FamilyLabel> = labels
            .iter()
            .enumerate()
            .filter(|(i, _)| mask >> i & 1 == 1)
            .map(|(_, l)| *l)
            .collect();
        let mut blocks: Vec<usize> = sub_labels
            .iter()
            .filter(|l| l.kind != crate::rank::FamilyKind::B && an.eval.g[l.block].dim() >= 3)
            .map(|l| l.block)
            .collect();
        blocks.dedup();
        if blocks.is_empty() {
            continue;
        }
        let vectors = |w: &SliceChoice| members(&an.eval, &sub_labels, w).expect("base family");
        let cond = |w: &SliceChoice| family::conditioning(&vectors(w));
        let pld = |w: &SliceChoice| {
            let vs = vectors(w);
            crate::rank::min_norm_point(&vs).residual
                / crate::rank::pld_threshold(&vs, an.opts.pld_tol)
        };
        let block_grids: Vec<Vec<Vec<f64>>> = blocks
            .iter()
            .map(|&j| slice_grid(an.eval.g[j].dim(), an))
            .collect();
        let starts: Vec<SliceChoice> = product(&block_grids, 256, seed)
            .into_iter()
            .map(|ws| {
                let mut c = default.clone();
                for (&j, w) in blocks.iter().zip(ws) {
                    c.insert(j, w);
                }
                c
            })
            .collect();
        let measures: Vec<(&dyn Fn(&SliceChoice) -> f64, f64)> = if sub_labels.len() <= n {
            vec![(&cond, 1e-6), (&pld, 10.0)]
        } else {
            vec![(&pld, 10.0)]
        };
        for (f, keep_below) in measures {
            let mut scored: Vec<(f64, &SliceChoice)> = starts.iter().map(|c| (f(c), c)).collect();
            scored.sort_by(|a, b| a.0.total_cmp(&b.0));
            for (_, start) in scored.into_iter().take(2) {
                let (c, v) = pattern_search(f, start.clone(), &blocks);
                if v <= keep_below {
                    out.push(c);
                }
            }
        }
    }
    dedup(out)
}

pub(crate) fn verdict<P: ConeProgram + ?Sized>(
    an: &Analyzer<'_, P>,
    cq: CqName,
) -> Result<CqVerdict, CqError> {
    let positive = cq == CqName::SeqCpld;
    let weak = an.check(if positive { CqName::WeakCpld } else { CqName::WeakCrcq })?;
    match weak.status {
        CqStatus::Violated => {
            return Ok(CqVerdict {
                cq,
                status: CqStatus::Violated,
                witness: weak.witness,
                certificate: None,
                note: Some("fails already along a sequence with zero perturbations".into()),
            })
        }
        CqStatus::Undecided => {
            return Ok(CqVerdict::undecided(cq, "the weak condition is undecided"));
        }
        CqStatus::Holds => {}
    }

    let n = an.x.len();
    let seed = an.opts.budget.seed;
    let labels = family::ndg_labels(&an.idx.ib, &an.idx.i0);
    let mut dirs = direction_set(an);
    dirs.push(vec![0.0; n]);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5e9_0000);
    // Perturbation 0 leaves w̄ unchanged.
    let perts: Vec<SliceChoice> = (0..=PERTURBATIONS)
        .map(|k| {
            an.idx
                .i0
                .iter()
                .map(|&j| {
                    let dim = an.eval.g[j].dim() - 1;
                    (j, if k == 0 { vec![0.0; dim] } else { random_unit(&mut rng, dim) })
                })
                .collect()
        })
        .collect();
    let first_k = an.opts.k_max + 1 - an.opts.tail.min(an.opts.k_max);
    let radii: Vec<f64> = (first_k..=an.opts.k_max)
        .map(|k| 0.5_f64.powi(k as i32))
        .collect();
    let mut cache: Vec<Vec<Option<Option<PointEval>>>> = vec![vec![None; dirs.len()]; radii.len()];
    let mut eval_at = |ri: usize, di: usize| -> Option<PointEval> {
        cache[ri][di]
            .get_or_insert_with(|| {
                let x: Vec<f64> = an
                    .x
                    .iter()
                    .zip(&dirs[di])
                    .map(|(a, b)| a + radii[ri] * b)
                    .collect();
                an.p.evaluate(&x).ok()
            })
            .clone()
    };

    let mut gray = false;
    let mut samples = 0usize;
    let masks = subset_masks(labels.len(), n);
    for cand in an.all_candidates() {
        let base = members(&an.eval, &labels, cand).expect("base family");
        for &mask in &masks {
            let sub = pick(&base, mask);
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
            let sub_labels: Vec<FamilyLabel> = labels
                .iter()
                .enumerate()
                .filter(|(i, _)| mask >> i & 1 == 1)
                .map(|(_, l)| *l)
                .collect();
            let mut breaks = Vec::with_capacity(radii.len());
            for (ri, &r) in radii.iter().enumerate() {
                let mut found = None;
                'search: for di in 0..dirs.len() {
                    let Some(eval) = eval_at(ri, di) else { continue };
                    for pert in &perts {
                        let w: SliceChoice = cand
                            .iter()
                            .map(|(j, wj)| {
                                let e = &pert[j];
                                let moved: Vec<f64> =
                                    wj.iter().zip(e).map(|(a, b)| a + r * b).collect();
                                (*j, normalize(&moved))
                            })
                            .collect();
                        samples += 1;
                        let Some(vs) = members(&eval, &sub_labels, &w) else { continue };
                        if !family::ld_nearby(&vs) {
                            found = Some(di);
                            break 'search;
                        }
                    }
                }
                match found {
                    Some(di) => breaks.push(di),
                    None => break,
                }
            }
            if breaks.len() < radii.len() {
                continue;
            }
            if dep == Dep::Gray {
                gray = true;
                continue;
            }
            let mut w = Witness {
                direction: Some(dirs[breaks[breaks.len() - 1]].clone()),
                steps: radii.clone(),
                slices: cand.clone(),
                subsets: Some(pick_labels(&labels, mask)),
                ..Witness::default()
            };
            w.evidence.insert(
                "base_sigma_min".into(),
                *crate::rank::singular_values(&sub).last().unwrap_or(&0.0),
            );
            w.evidence.insert("smallest_radius".into(), radii[radii.len() - 1]);
            return Ok(CqVerdict::violated(cq, w)
                .with_note("a dependent subset becomes independent arbitrarily close to (x̄, w̄)"));
        }
    }
    if gray {
        return Ok(CqVerdict::undecided(cq, "a dependence test fell in the gray zone"));
    }
    Ok(CqVerdict::holds(
        cq,
        Certificate {
            degeneracy: None,
            samples,
            exhaustive: false,
        },
    )
    .with_note("search-certified over sampled neighborhoods"))
}
