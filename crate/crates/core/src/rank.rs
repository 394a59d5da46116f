//! Tolerant linear-algebra predicates: numerical rank, positive linear
//! dependence, Carathéodory reduction and conic linear independence over
//! products of half-lines and Lorentz cones.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cone::{dot, norm};

/// Relative singular-value cutoff used by [`numeric_rank`].
pub const RANK_TOL: f64 = 1e-8;

/// Families whose largest singular value is below this have rank 0.
pub const RANK_ABS_ZERO: f64 = 1e-12;

/// Default tolerance for positive linear dependence and conic searches.
pub const PLD_TOL: f64 = 1e-8;

/// Which member of the family `D_{JB,J-,J+}` a vector comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FamilyKind {
    B,
    Minus,
    Plus,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FamilyLabel {
    /// 0-based constraint block.
    pub block: usize,
    pub kind: FamilyKind,
}

/// An ordered list of equally long vectors with their origin labels.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct VectorFamily {
    pub vectors: Vec<Vec<f64>>,
    pub labels: Vec<FamilyLabel>,
}

impl VectorFamily {
    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn push(&mut self, label: FamilyLabel, v: Vec<f64>) {
        self.labels.push(label);
        self.vectors.push(v);
    }
}

fn as_columns(vectors: &[Vec<f64>]) -> DMatrix<f64> {
    let n = vectors.first().map_or(0, Vec::len);
    DMatrix::from_fn(n, vectors.len(), |i, j| vectors[j][i])
}

/// Singular values of the matrix whose columns are `vectors`, descending.
pub fn singular_values(vectors: &[Vec<f64>]) -> Vec<f64> {
    if vectors.is_empty() || vectors[0].is_empty() {
        return Vec::new();
    }
    let mut s: Vec<f64> = as_columns(vectors).singular_values().iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// Number of singular values above `tol·σ_max`; 0 when `σ_max <= 1e-12`.
pub fn numeric_rank(vectors: &[Vec<f64>], tol: f64) -> usize {
    let s = singular_values(vectors);
    let Some(&smax) = s.first() else { return 0 };
    if smax <= RANK_ABS_ZERO {
        return 0;
    }
    s.iter().filter(|&&v| v > tol * smax).count()
}

/// True when the family has full column rank under [`RANK_TOL`].
pub fn is_linearly_independent(vectors: &[Vec<f64>]) -> bool {
    numeric_rank(vectors, RANK_TOL) == vectors.len()
}

/// Nearest point to the origin in the convex hull of a family.
#[derive(Debug, Clone, PartialEq)]
pub struct MinNormPoint {
    /// Convex weights, one per input vector.
    pub coefficients: Vec<f64>,
    pub point: Vec<f64>,
    pub residual: f64,
}

/// Minimum-norm point of `conv(vectors)` by Wolfe's active-set method.
pub fn min_norm_point(vectors: &[Vec<f64>]) -> MinNormPoint {
    let k = vectors.len();
    assert!(k > 0, "min_norm_point needs a nonempty family");
    let n = vectors[0].len();
    let scale = vectors.iter().map(|v| dot(v, v)).fold(0.0, f64::max);
    let combine = |set: &[usize], lam: &[f64]| -> Vec<f64> {
        let mut x = vec![0.0; n];
        for (&i, &l) in set.iter().zip(lam) {
            for (xr, vr) in x.iter_mut().zip(&vectors[i]) {
                *xr += l * vr;
            }
        }
        x
    };

    let start = (0..k)
        .min_by(|&a, &b| dot(&vectors[a], &vectors[a]).total_cmp(&dot(&vectors[b], &vectors[b])))
        .unwrap_or(0);
    let mut set = vec![start];
    let mut lam = vec![1.0];
    let mut x = vectors[start].clone();

    for _ in 0..(50 * k + 50) {
        let xx = dot(&x, &x);
        if xx <= 1e-30 * scale.max(1e-300) {
            break;
        }
        let (j, xj) = (0..k)
            .map(|i| (i, dot(&x, &vectors[i])))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .expect("nonempty");
        if xj >= xx - 1e-12 * scale || set.contains(&j) {
            break;
        }
        set.push(j);
        lam.push(0.0);

        loop {
            let Some(mu) = affine_min_norm(vectors, &set) else { break };
            if mu.iter().all(|&m| m > 1e-12) {
                lam = mu;
                break;
            }
            // Move from lam toward mu until the first weight hits zero.
            let mut theta = 1.0_f64;
            for (l, m) in lam.iter().zip(&mu) {
                if *m <= 1e-12 && l - m > 0.0 {
                    theta = theta.min(l / (l - m));
                }
            }
            for (l, m) in lam.iter_mut().zip(&mu) {
                *l = (1.0 - theta) * *l + theta * m;
            }
            let mut keep_set = Vec::with_capacity(set.len());
            let mut keep_lam = Vec::with_capacity(set.len());
            let drop = lam
                .iter()
                .enumerate()
                .min_by(|a, b| a.1.total_cmp(b.1))
                .map(|(i, _)| i)
                .unwrap_or(0);
            for (idx, (&i, &l)) in set.iter().zip(&lam).enumerate() {
                if idx != drop && l > 1e-12 {
                    keep_set.push(i);
                    keep_lam.push(l);
                }
            }
            if keep_set.is_empty() {
                break;
            }
            let total: f64 = keep_lam.iter().sum();
            keep_lam.iter_mut().for_each(|l| *l /= total);
            set = keep_set;
            lam = keep_lam;
            if set.len() == 1 {
                break;
            }
        }
        x = combine(&set, &lam);
    }

    let mut coefficients = vec![0.0; k];
    for (&i, &l) in set.iter().zip(&lam) {
        coefficients[i] += l;
    }
    let point = combine(&set, &lam);
    let residual = norm(&point);
    MinNormPoint {
        coefficients,
        point,
        residual,
    }
}

/// Weights summing to one that minimize `‖Σ μ_i v_i‖` over the affine hull of
/// the selected vectors.
fn affine_min_norm(vectors: &[Vec<f64>], set: &[usize]) -> Option<Vec<f64>> {
    let s = set.len();
    let mut kkt = DMatrix::zeros(s + 1, s + 1);
    for a in 0..s {
        for b in 0..s {
            kkt[(a, b)] = dot(&vectors[set[a]], &vectors[set[b]]);
        }
        kkt[(a, s)] = 1.0;
        kkt[(s, a)] = 1.0;
    }
    let mut rhs = DVector::zeros(s + 1);
    rhs[s] = 1.0;
    let scale = kkt.amax().max(1.0);
    let sol = kkt.svd(true, true).solve(&rhs, 1e-14 * scale).ok()?;
    let mu: Vec<f64> = sol.iter().take(s).copied().collect();
    let total: f64 = mu.iter().sum();
    if !total.is_finite() || total.abs() < 1e-14 {
        return None;
    }
    Some(mu.iter().map(|m| m / total).collect())
}

/// Witness that `Σ a_i v_i ≈ 0` with `a` on the simplex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PldCertificate {
    pub coefficients: Vec<f64>,
    pub residual: f64,
}

/// Threshold used for "numerically zero" combinations of `vectors`.
pub fn pld_threshold(vectors: &[Vec<f64>], tol: f64) -> f64 {
    tol * (1.0 + vectors.iter().map(|v| norm(v)).fold(0.0, f64::max))
}

/// Returns a certificate iff the minimum of `‖Σ a_i v_i‖` over the simplex is
/// at most `tol·(1 + max_i ‖v_i‖)`.
pub fn is_positively_linearly_dependent(vectors: &[Vec<f64>], tol: f64) -> Option<PldCertificate> {
    if vectors.is_empty() {
        return None;
    }
    let mnp = min_norm_point(vectors);
    (mnp.residual <= pld_threshold(vectors, tol)).then_some(PldCertificate {
        coefficients: mnp.coefficients,
        residual: mnp.residual,
    })
}

/// Output of [`caratheodory_reduce`].
#[derive(Debug, Clone, PartialEq)]
pub struct CaratheodoryResult {
    /// Selected indices into the input, increasing.
    pub subset: Vec<usize>,
    /// New coefficients, parallel to `subset`.
    pub alphas: Vec<f64>,
}

/// Rewrites `Σ α_i v_i` over a linearly independent subset, keeping the sign
/// of every surviving coefficient.
pub fn caratheodory_reduce(vectors: &[Vec<f64>], alphas: &[f64]) -> CaratheodoryResult {
    assert_eq!(vectors.len(), alphas.len(), "one coefficient per vector");
    let n = vectors.first().map_or(0, Vec::len);
    let target = weighted_sum(vectors, alphas, n);
    let mut subset: Vec<usize> = (0..vectors.len()).filter(|&i| alphas[i] != 0.0).collect();
    let mut coef: Vec<f64> = subset.iter().map(|&i| alphas[i]).collect();

    while !subset.is_empty() {
        let cols: Vec<Vec<f64>> = subset.iter().map(|&i| vectors[i].clone()).collect();
        if numeric_rank(&cols, RANK_TOL) == cols.len() {
            break;
        }
        let z = null_direction(&cols);
        // Shrink along ±z until the first coefficient reaches zero.
        let zmax = z.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let ratio = |sign: f64| {
            coef.iter()
                .zip(&z)
                .enumerate()
                .filter(|(_, (a, zi))| zi.abs() > 1e-12 * zmax && sign * *a / *zi > 0.0)
                .map(|(i, (a, zi))| (i, sign * a / zi))
                .min_by(|a, b| a.1.total_cmp(&b.1))
        };
        let (sign, (hit, theta)) = match (ratio(1.0), ratio(-1.0)) {
            (Some(p), Some(m)) if m.1 < p.1 => (-1.0, m),
            (Some(p), _) => (1.0, p),
            (None, Some(m)) => (-1.0, m),
            (None, None) => unreachable!("nonzero null direction"),
        };
        let amax = coef.iter().fold(0.0_f64, |m, a| m.max(a.abs()));
        let mut next_subset = Vec::with_capacity(subset.len());
        let mut next_coef = Vec::with_capacity(subset.len());
        for (idx, (&i, (&a, &zi))) in subset.iter().zip(coef.iter().zip(&z)).enumerate() {
            let updated = a - sign * theta * zi;
            if idx != hit && updated.abs() > 1e-14 * amax && updated * a > 0.0 {
                next_subset.push(i);
                next_coef.push(updated);
            }
        }
        subset = next_subset;
        coef = next_coef;
    }

    if !subset.is_empty() {
        // Least-squares polish on the final independent subset.
        let cols: Vec<Vec<f64>> = subset.iter().map(|&i| vectors[i].clone()).collect();
        let a = as_columns(&cols);
        let b = DVector::from_column_slice(&target);
        if let Ok(sol) = a.svd(true, true).solve(&b, 1e-300) {
            let same_sign = sol.iter().zip(&coef).all(|(s, c)| s * c > 0.0);
            let err = |c: &[f64]| norm(&sub(&weighted_sum(&cols, c, n), &target));
            let polished: Vec<f64> = sol.iter().copied().collect();
            if same_sign && err(&polished) <= err(&coef) {
                coef = polished;
            }
        }
    }
    CaratheodoryResult {
        subset,
        alphas: coef,
    }
}

fn weighted_sum(vectors: &[Vec<f64>], alphas: &[f64], n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n];
    for (v, a) in vectors.iter().zip(alphas) {
        for (o, x) in out.iter_mut().zip(v) {
            *o += a * x;
        }
    }
    out
}

fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// Right singular vector for the smallest singular value of the column
/// matrix, padded with zero rows so that it is always available.
fn null_direction(cols: &[Vec<f64>]) -> Vec<f64> {
    let n = cols[0].len();
    let p = cols.len();
    let rows = n.max(p);
    let m = DMatrix::from_fn(rows, p, |i, j| if i < n { cols[j][i] } else { 0.0 });
    let svd = m.svd(false, true);
    let vt = svd.v_t.expect("requested V^T");
    let (imin, _) = svd
        .singular_values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("nonempty");
    vt.row(imin).iter().copied().collect()
}

/// One factor of the cone `C` in a conic-independence test, together with the
/// columns of `M` acting on it.
#[derive(Debug, Clone, PartialEq)]
pub enum ConeBlock {
    /// `R_+` acting on a single column.
    Halfline(Vec<f64>),
    /// `L^m` acting on `m` columns.
    Lorentz(Vec<Vec<f64>>),
}

impl ConeBlock {
    fn lorentz_dim(&self) -> Option<usize> {
        match self {
            ConeBlock::Halfline(_) => None,
            ConeBlock::Lorentz(cols) => Some(cols.len()),
        }
    }
}

/// Search effort for [`conic_li_certificate`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchBudget {
    pub starts: usize,
    pub steps: usize,
    /// Slice-grid points per cone are `2^(m-1) · grid_factor`.
    pub grid_factor: usize,
    pub seed: u64,
}

impl Default for SearchBudget {
    fn default() -> Self {
        Self {
            starts: 64,
            steps: 500,
            grid_factor: 8,
            seed: 0,
        }
    }
}

/// Outcome of a conic linear-independence search.
#[derive(Debug, Clone, PartialEq)]
pub enum ConicLi {
    /// No dependence found. `min_margin` is the smallest residual seen,
    /// measured in units of the dependence threshold; `exhaustive` is set
    /// when the search space was finite and fully enumerated.
    Independent {
        min_margin: f64,
        samples: usize,
        exhaustive: bool,
    },
    /// `v` lies in `C`, is nonzero and `‖Mv‖ = residual`.
    Dependent {
        v: Vec<Vec<f64>>,
        slices: Vec<Option<Vec<f64>>>,
        residual: f64,
    },
    /// Best residual fell in the gray zone `(thr, 10·thr]`.
    Undecided { min_margin: f64, samples: usize },
}

struct SliceProblem<'a> {
    blocks: &'a [ConeBlock],
    n: usize,
}

struct SliceEval {
    residual: f64,
    /// Dependence threshold for this slice's generators.
    thr: f64,
    mnp: MinNormPoint,
}

impl SliceEval {
    fn margin(&self) -> f64 {
        self.residual / self.thr
    }

    fn dependent(&self) -> bool {
        self.residual <= self.thr
    }
}

impl SliceProblem<'_> {
    /// Generators for fixed slices: halfline columns, then `M_j(1,-w)`,
    /// `M_j(1,w)` for every Lorentz block.
    fn generators(&self, slices: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let mut gens = Vec::new();
        let mut s = 0;
        for b in self.blocks {
            match b {
                ConeBlock::Halfline(col) => gens.push(col.clone()),
                ConeBlock::Lorentz(cols) => {
                    let w = &slices[s];
                    s += 1;
                    let mut hat = vec![0.0; self.n];
                    for (c, wi) in cols[1..].iter().zip(w) {
                        for (h, ci) in hat.iter_mut().zip(c) {
                            *h += wi * ci;
                        }
                    }
                    gens.push(cols[0].iter().zip(&hat).map(|(a, h)| a - h).collect());
                    gens.push(cols[0].iter().zip(&hat).map(|(a, h)| a + h).collect());
                }
            }
        }
        gens
    }

    fn eval(&self, slices: &[Vec<f64>], tol: f64) -> SliceEval {
        let gens = self.generators(slices);
        let mnp = min_norm_point(&gens);
        SliceEval {
            residual: mnp.residual,
            thr: pld_threshold(&gens, tol),
            mnp,
        }
    }

    /// Gradient of `½ residual²` with respect to each slice, by the envelope
    /// formula `(b - a) · M̂ᵀ r`.
    fn slice_gradient(&self, ev: &SliceEval) -> Vec<Vec<f64>> {
        let mut out = Vec::new();
        let mut g = 0;
        for b in self.blocks {
            match b {
                ConeBlock::Halfline(_) => g += 1,
                ConeBlock::Lorentz(cols) => {
                    let a = ev.mnp.coefficients[g];
                    let bb = ev.mnp.coefficients[g + 1];
                    g += 2;
                    out.push(
                        cols[1..]
                            .iter()
                            .map(|c| (bb - a) * dot(c, &ev.mnp.point))
                            .collect(),
                    );
                }
            }
        }
        out
    }

    fn cone_vector(&self, slices: &[Vec<f64>], coefficients: &[f64]) -> Vec<Vec<f64>> {
        let mut v = Vec::new();
        let mut g = 0;
        let mut s = 0;
        for b in self.blocks {
            match b {
                ConeBlock::Halfline(_) => {
                    v.push(vec![coefficients[g]]);
                    g += 1;
                }
                ConeBlock::Lorentz(_) => {
                    let (a, bb) = (coefficients[g], coefficients[g + 1]);
                    g += 2;
                    let w = &slices[s];
                    s += 1;
                    let mut vj = vec![a + bb];
                    vj.extend(w.iter().map(|wi| (bb - a) * wi));
                    v.push(vj);
                }
            }
        }
        v
    }
}

/// Quasi-uniform unit vectors in `R^dim`.
pub fn sphere_grid(dim: usize, count: usize, seed: u64) -> Vec<Vec<f64>> {
    match dim {
        0 => vec![Vec::new()],
        1 => vec![vec![1.0], vec![-1.0]],
        2 => (0..count)
            .map(|i| {
                let t = 2.0 * std::f64::consts::PI * i as f64 / count as f64;
                vec![t.cos(), t.sin()]
            })
            .collect(),
        3 => {
            // Fibonacci lattice
            let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
            (0..count)
                .map(|i| {
                    let z = 1.0 - 2.0 * (i as f64 + 0.5) / count as f64;
                    let r = (1.0 - z * z).sqrt();
                    let t = golden * i as f64;
                    vec![r * t.cos(), r * t.sin(), z]
                })
                .collect()
        }
        _ => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_0000 ^ dim as u64);
            (0..count).map(|_| random_unit(&mut rng, dim)).collect()
        }
    }
}

/// Uniform random unit vector in `R^dim`.
pub fn random_unit<R: Rng>(rng: &mut R, dim: usize) -> Vec<f64> {
    loop {
        // Box-Muller pairs give standard normals.
        let v: Vec<f64> = (0..dim)
            .map(|_| {
                let u1: f64 = rng.gen_range(1e-300..1.0);
                let u2: f64 = rng.gen();
                (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
            })
            .collect();
        let nv = norm(&v);
        if nv > 1e-8 {
            return v.iter().map(|x| x / nv).collect();
        }
    }
}

pub(crate) fn normalize(v: &[f64]) -> Vec<f64> {
    let nv = norm(v);
    if nv == 0.0 {
        let mut e = vec![0.0; v.len()];
        if let Some(first) = e.first_mut() {
            *first = 1.0;
        }
        return e;
    }
    v.iter().map(|x| x / nv).collect()
}

/// Grid points per slice sphere for a Lorentz cone of dimension `m`.
pub fn slice_grid_size(m: usize, factor: usize) -> usize {
    (1usize << (m - 1).min(20)) * factor
}

/// Searches for a nonzero `v ∈ C` with `Mv ≈ 0`, where `C` is the product of
/// the blocks' cones and `M` acts blockwise.
///
/// Each Lorentz factor is covered by its slices `cone{(1,-w),(1,w)}`; for a
/// fixed choice of slices the question is a minimum-norm-point problem over
/// the generators, decided against `tol·(1 + max generator norm)`. Slices are
/// searched by a grid plus multi-start projected gradient; `extra_starts`
/// (one unit vector per Lorentz block, in block order) are tried first.
pub fn conic_li_certificate(
    blocks: &[ConeBlock],
    tol: f64,
    budget: &SearchBudget,
    extra_starts: &[Vec<Vec<f64>>],
) -> ConicLi {
    if blocks.is_empty() {
        return ConicLi::Independent {
            min_margin: f64::INFINITY,
            samples: 0,
            exhaustive: true,
        };
    }
    let n = match &blocks[0] {
        ConeBlock::Halfline(c) => c.len(),
        ConeBlock::Lorentz(cols) => cols[0].len(),
    };
    let problem = SliceProblem { blocks, n };
    let dims: Vec<usize> = blocks.iter().filter_map(ConeBlock::lorentz_dim).collect();
    let mut samples = 0usize;
    let mut best = f64::INFINITY;

    let found = |slices: &[Vec<f64>], ev: &SliceEval| {
        let mut s = slices.iter();
        ConicLi::Dependent {
            v: problem.cone_vector(slices, &ev.mnp.coefficients),
            slices: blocks
                .iter()
                .map(|b| b.lorentz_dim().map(|_| s.next().expect("slice").clone()))
                .collect(),
            residual: ev.residual,
        }
    };

    // A 2-dimensional cone has the single slice w = ±1, so only cones with
    // m >= 3 need searching.
    if dims.iter().all(|&m| m < 3) {
        let base: Vec<Vec<f64>> = dims.iter().map(|_| vec![1.0]).collect();
        let ev = problem.eval(&base, tol);
        if ev.dependent() {
            return found(&base, &ev);
        }
        return verdict(ev.margin(), 1, true);
    }

    let starts_given: Vec<Vec<Vec<f64>>> = extra_starts
        .iter()
        .filter(|s| s.len() == dims.len() && s.iter().zip(&dims).all(|(w, &m)| w.len() == m - 1))
        .map(|s| s.iter().map(|w| normalize(w)).collect())
        .collect();
    for slices in &starts_given {
        let ev = problem.eval(slices, tol);
        samples += 1;
        best = best.min(ev.margin());
        if ev.dependent() {
            return found(slices, &ev);
        }
    }

    // Deterministic slice grid over the product of spheres.
    let grids: Vec<Vec<Vec<f64>>> = dims
        .iter()
        .map(|&m| {
            if m >= 3 {
                sphere_grid(m - 1, slice_grid_size(m, budget.grid_factor), budget.seed)
            } else {
                vec![vec![1.0]]
            }
        })
        .collect();
    let total: usize = grids.iter().map(Vec::len).product();
    let mut rng = ChaCha8Rng::seed_from_u64(budget.seed);
    let max_grid = 4096;
    let picks: Vec<Vec<Vec<f64>>> = if total <= max_grid {
        (0..total)
            .map(|flat| {
                let mut rem = flat;
                grids
                    .iter()
                    .map(|g| {
                        let w = g[rem % g.len()].clone();
                        rem /= g.len();
                        w
                    })
                    .collect()
            })
            .collect()
    } else {
        (0..max_grid)
            .map(|_| grids.iter().map(|g| g[rng.gen_range(0..g.len())].clone()).collect())
            .collect()
    };
    let mut scored: Vec<(f64, Vec<Vec<f64>>)> = Vec::with_capacity(picks.len());
    for slices in picks {
        let ev = problem.eval(&slices, tol);
        samples += 1;
        best = best.min(ev.margin());
        if ev.dependent() {
            return found(&slices, &ev);
        }
        scored.push((ev.residual, slices));
    }

    // Local refinement: given starts, best grid points, then random starts.
    scored.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut starts = starts_given;
    starts.extend(scored.into_iter().take(8).map(|(_, s)| s));
    for _ in 0..budget.starts {
        starts.push(
            dims.iter()
                .map(|&m| if m >= 3 { random_unit(&mut rng, m - 1) } else { vec![1.0] })
                .collect(),
        );
    }
    for start in starts {
        let (slices, ev, used) = descend(&problem, start, budget.steps, tol);
        samples += used;
        best = best.min(ev.margin());
        if ev.dependent() {
            return found(&slices, &ev);
        }
    }
    verdict(best, samples, false)
}

fn verdict(min_margin: f64, samples: usize, exhaustive: bool) -> ConicLi {
    if min_margin <= 10.0 {
        ConicLi::Undecided { min_margin, samples }
    } else {
        ConicLi::Independent {
            min_margin,
            samples,
            exhaustive,
        }
    }
}

/// Projected gradient on the product of spheres with Armijo backtracking.
fn descend(
    problem: &SliceProblem<'_>,
    mut slices: Vec<Vec<f64>>,
    steps: usize,
    tol: f64,
) -> (Vec<Vec<f64>>, SliceEval, usize) {
    let mut ev = problem.eval(&slices, tol);
    let mut used = 1;
    let mut step = 1.0;
    for _ in 0..steps {
        if ev.dependent() {
            break;
        }
        let grad = problem.slice_gradient(&ev);
        let mut tangent = Vec::with_capacity(grad.len());
        let mut gnorm2 = 0.0;
        for (w, g) in slices.iter().zip(&grad) {
            if w.len() < 2 {
                tangent.push(vec![0.0; w.len()]);
                continue;
            }
            let radial = dot(g, w);
            let t: Vec<f64> = g.iter().zip(w).map(|(gj, wj)| gj - radial * wj).collect();
            gnorm2 += dot(&t, &t);
            tangent.push(t);
        }
        if gnorm2.sqrt() <= 1e-15 * (1.0 + ev.residual) {
            break;
        }
        let f0 = 0.5 * ev.residual * ev.residual;
        let mut accepted = false;
        step *= 2.0;
        for _ in 0..40 {
            let trial: Vec<Vec<f64>> = slices
                .iter()
                .zip(&tangent)
                .map(|(w, t)| {
                    if w.len() < 2 {
                        w.clone()
                    } else {
                        normalize(&w.iter().zip(t).map(|(a, b)| a - step * b).collect::<Vec<_>>())
                    }
                })
                .collect();
            let tev = problem.eval(&trial, tol);
            used += 1;
            if 0.5 * tev.residual * tev.residual <= f0 - 1e-4 * step * gnorm2 {
                slices = trial;
                ev = tev;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    (slices, ev, used)
}
