use std::process::ExitCode;
use std::time::Instant;

use nsocp::cone::{norm, project, spectral_decompose, SocVector};
use nsocp::corpus;
use nsocp::cq::{analyze, crosscheck_ndg_decomposition, hierarchy_violations, CqName, CqOptions};
use nsocp::model::{akkt_check, ConeProgram, IterateLog, ProblemSpec};
use nsocp::rank::{caratheodory_reduce, numeric_rank, RANK_TOL};
use nsocp::solvers::{penalty_gradient, penalty_value, solve, Method, SolverConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Criteria that are known not to be met; the run fails if one of them
/// starts passing so the list stays accurate.
const KNOWN_FAILURES: &[usize] = &[6];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn random_soc(rng: &mut ChaCha8Rng) -> SocVector {
    let m = rng.gen_range(2..=6);
    SocVector::new((0..m).map(|_| rng.gen_range(-10.0..10.0)).collect()).unwrap()
}

fn corpus_specs() -> Vec<(ProblemSpec, Vec<f64>)> {
    corpus::all()
        .into_iter()
        .map(|pf| {
            let point = pf.points_of_interest[0].clone();
            (pf.to_spec().unwrap(), point)
        })
        .collect()
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let opts = CqOptions::default();
    let cfg = SolverConfig::default();
    let mut bad = Vec::new();
    let mut checks = 0;
    for pf in corpus::all() {
        let r = corpus::run_fixture(&pf, &opts, &cfg).unwrap();
        checks += r.checks.len() + r.smoke.len();
        for c in r.checks.iter().filter(|c| !c.matched) {
            bad.push(format!("{}:{}={:?}", pf.name, c.cq, c.got));
        }
        for s in r.smoke.iter().filter(|s| !s.passed) {
            bad.push(format!("{}:{:?} solve {:?}", pf.name, s.test.method, s.status));
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        bad.is_empty() && secs < 60.0,
        format!("{checks} checks, {} mismatches {bad:?}, {secs:.2} s", bad.len()),
    )
}

/// Polynomial with small integer coefficients and constant term `c`.
fn random_poly(rng: &mut ChaCha8Rng, n: usize, c: i32) -> String {
    let mut terms = vec![c.to_string()];
    for i in 1..=n {
        if rng.gen_bool(0.5) {
            terms.push(format!("{}*x{i}", rng.gen_range(-2..=2)));
        }
        for k in i..=n {
            if rng.gen_bool(0.25) {
                terms.push(format!("{}*x{i}*x{k}", rng.gen_range(-2..=2)));
            }
        }
    }
    terms.join(" + ")
}

/// Random problem feasible at the origin; each block is zero, on the
/// boundary or interior there.
fn random_problem(rng: &mut ChaCha8Rng, id: usize) -> ProblemSpec {
    let n = rng.gen_range(1..=3);
    let q = rng.gen_range(1..=2);
    let blocks: Vec<Vec<String>> = (0..q)
        .map(|_| {
            let m = rng.gen_range(2..=3);
            let consts: Vec<i32> = match rng.gen_range(0..3) {
                0 => vec![0; m],
                1 => (0..m).map(|i| i32::from(i <= 1)).collect(),
                _ => (0..m).map(|i| if i == 0 { 2 } else { 0 }).collect(),
            };
            consts.into_iter().map(|c| random_poly(rng, n, c)).collect()
        })
        .collect();
    let refs: Vec<Vec<&str>> = blocks.iter().map(|b| b.iter().map(String::as_str).collect()).collect();
    ProblemSpec::parse(&format!("random-{id}"), n, "0", &refs).unwrap()
}

fn criterion_2() -> Outcome {
    let opts = CqOptions::default().with_seed(7);
    let mut bad = Vec::new();
    let mut undecided = 0;
    let mut run = |name: &str, p: &ProblemSpec, x: &[f64]| {
        let v = analyze(p, x, &CqName::ALL, &opts).unwrap();
        undecided += v.iter().filter(|v| v.status.as_bool().is_none()).count();
        for (up, down) in hierarchy_violations(&v) {
            bad.push(format!("{name}: {up} holds, {down} violated"));
        }
    };
    let fixtures = corpus_specs();
    for (p, x) in &fixtures {
        run(&p.name, p, x);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for id in 0..100 {
        let p = random_problem(&mut rng, id);
        let x = vec![0.0; p.n];
        run(&p.name, &p, &x);
    }
    outcome(
        bad.is_empty(),
        format!(
            "{} fixtures + 100 random problems, {} inversions {bad:?}, {undecided} undecided verdicts",
            fixtures.len(),
            bad.len()
        ),
    )
}

fn criterion_3() -> Outcome {
    const TRIALS: usize = 10_000;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut failed = [0usize; 4];
    for _ in 0..TRIALS {
        let y = random_soc(&mut rng);
        let tol = 1e-10 * (1.0 + y.norm());
        let p = project(&y);
        let q = project(&y.neg());
        let moreau = dist(&p.sub(&q).into_vec(), y.as_slice()) <= tol
            && p.dot(&q).abs() <= tol * (1.0 + y.norm())
            && p.lambda1() >= -tol
            && q.lambda1() >= -tol;
        let idem = dist(project(&p).as_slice(), p.as_slice()) <= 1e-10 * (1.0 + p.norm());
        let z = SocVector::new((0..y.dim()).map(|_| rng.gen_range(-10.0..10.0)).collect()).unwrap();
        let nonexp = dist(p.as_slice(), project(&z).as_slice()) <= dist(y.as_slice(), z.as_slice()) + 1e-10;
        let s = spectral_decompose(&y, None).unwrap();
        let recon = dist(&s.reconstruct(), y.as_slice()) <= tol && s.lambda1 <= s.lambda2;
        for (f, ok) in failed.iter_mut().zip([moreau, idem, nonexp, recon]) {
            *f += usize::from(!ok);
        }
    }
    outcome(
        failed.iter().all(|&f| f == 0),
        format!(
            "{TRIALS} trials each; failures moreau {}, idempotence {}, nonexpansive {}, reconstruction {}",
            failed[0], failed[1], failed[2], failed[3]
        ),
    )
}

fn criterion_4() -> Outcome {
    const TRIALS: usize = 10_000;
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut failed = 0;
    let mut reduced = 0;
    for _ in 0..TRIALS {
        let n = rng.gen_range(1..=4);
        let k = rng.gen_range(1..=7);
        let mut vs: Vec<Vec<f64>> = (0..k)
            .map(|_| (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect())
            .collect();
        let mut alphas: Vec<f64> = (0..k)
            .map(|_| {
                let a: f64 = rng.gen_range(0.1..3.0);
                if rng.gen_bool(0.5) { a } else { -a }
            })
            .collect();
        // Scaled copies force dependence.
        for _ in 0..rng.gen_range(0..3) {
            let src = rng.gen_range(0..k);
            let s: f64 = rng.gen_range(-2.0..2.0);
            vs.push(vs[src].iter().map(|x| s * x).collect());
            alphas.push(if s >= 0.0 { 0.7 } else { -0.7 });
        }
        let r = caratheodory_reduce(&vs, &alphas);
        let sum = |idx: &[usize], coef: &[f64]| -> Vec<f64> {
            (0..n).map(|row| idx.iter().zip(coef).map(|(&i, c)| c * vs[i][row]).sum()).collect()
        };
        let all: Vec<usize> = (0..vs.len()).collect();
        let scale = 1.0 + alphas.iter().zip(&vs).map(|(a, v)| a.abs() * norm(v)).sum::<f64>();
        let cols: Vec<Vec<f64>> = r.subset.iter().map(|&i| vs[i].clone()).collect();
        let ok = dist(&sum(&r.subset, &r.alphas), &sum(&all, &alphas)) <= 1e-10 * scale
            && numeric_rank(&cols, RANK_TOL) == cols.len()
            && r.subset.iter().zip(&r.alphas).all(|(&i, a)| a * alphas[i] > 0.0);
        failed += usize::from(!ok);
        reduced += usize::from(r.subset.len() < vs.len());
    }
    outcome(
        failed == 0,
        format!("{TRIALS} instances ({reduced} reduced), {failed} postcondition failures"),
    )
}

fn criterion_5() -> Outcome {
    let spec = corpus::get("halfline-min").unwrap().to_spec().unwrap();
    let mut pass = true;
    let mut parts = Vec::new();
    for method in [Method::Penalty, Method::Auglag, Method::Sqp] {
        let r = solve(&spec, &[5.0], &SolverConfig::default().with_method(method)).unwrap();
        let m = r.mu.first().map(|m| m.as_slice().to_vec()).unwrap_or_default();
        let x_ok = (r.x[0] - 1.0).abs() <= 1e-5;
        let mu_ok = m.len() == 2 && (m[0] - 1.0).abs() <= 1e-4 && (m[1] + 1.0).abs() <= 1e-4;
        let akkt = akkt_check(&spec, &r.logs, 1e-6).map(|a| a.holds).unwrap_or(false);
        pass &= x_ok && mu_ok && akkt;
        parts.push(format!(
            "{method:?}: x={:.9} mu={m:.6?} akkt={akkt} ({} iterates)",
            r.x[0],
            r.logs.len()
        ));
    }
    outcome(pass, parts.join("; "))
}

fn max_mu_norm(log: &IterateLog) -> f64 {
    log.mu.iter().map(SocVector::norm).fold(0.0, f64::max)
}

fn criterion_6() -> Outcome {
    let spec = corpus::get("zz-erratum").unwrap().to_spec().unwrap();
    let mut pass = true;
    let mut parts = Vec::new();
    for method in [Method::Penalty, Method::Auglag] {
        let r = solve(&spec, &[1.0], &SolverConfig::default().with_method(method)).unwrap();
        let Some(last) = r.logs.last() else {
            pass = false;
            parts.push(format!("{method:?}: no iterates"));
            continue;
        };
        let k = r.logs.len();
        let growth = if k >= 4 {
            max_mu_norm(last) / max_mu_norm(&r.logs[k - 4])
        } else {
            f64::NAN
        };
        let res = &last.residuals;
        let ok = res.feasibility < 1e-6 && res.stationarity < 1e-6 && growth >= 10.0;
        pass &= ok;
        parts.push(format!(
            "{method:?}: {:?}, feasibility {:.2e}, stationarity {:.2e}, multiplier growth {growth:.10}x over last 3 iterations",
            r.status, res.feasibility, res.stationarity
        ));
    }
    outcome(pass, parts.join("; "))
}

fn central_difference(f: impl Fn(&[f64]) -> f64, x: &[f64], i: usize) -> f64 {
    let h = 1e-6 * (1.0 + x[i].abs());
    let mut a = x.to_vec();
    let mut b = x.to_vec();
    a[i] += h;
    b[i] -= h;
    (f(&a) - f(&b)) / (2.0 * h)
}

fn close(fd: f64, g: f64) -> bool {
    (fd - g).abs() <= 1e-5 * g.abs().max(1.0)
}

fn criterion_7() -> Outcome {
    const POINTS: usize = 100;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut compared = 0usize;
    let mut bad = Vec::new();
    for (p, _) in corpus_specs() {
        let dims = p.cone_dims();
        for _ in 0..POINTS {
            let x: Vec<f64> = (0..p.n).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let rho = rng.gen_range(1.0..10.0);
            let shift: Vec<SocVector> = dims
                .iter()
                .map(|&m| project(&SocVector::new((0..m).map(|_| rng.gen_range(-3.0..3.0)).collect()).unwrap()))
                .collect();
            let exprs = std::iter::once(&p.objective).chain(p.constraints.iter().flat_map(|b| &b.components));
            for e in exprs {
                let g = e.grad(&x).unwrap();
                for i in 0..p.n {
                    let fd = central_difference(|y| e.eval(y).unwrap(), &x, i);
                    compared += 1;
                    if !close(fd, g[i]) {
                        bad.push(format!("{} expr {e} d{i}", p.name));
                    }
                }
            }
            for mu in [None, Some(&shift[..])] {
                let g = penalty_gradient(&p, &x, rho, mu).unwrap();
                for i in 0..p.n {
                    let fd = central_difference(|y| penalty_value(&p, y, rho, mu).unwrap(), &x, i);
                    compared += 1;
                    if !close(fd, g[i]) {
                        let kind = if mu.is_some() { "auglag" } else { "penalty" };
                        bad.push(format!("{} {kind} d{i} at {x:?}: {fd} vs {}", p.name, g[i]));
                    }
                }
            }
        }
    }
    outcome(
        bad.is_empty(),
        format!("{compared} partials compared, {} mismatches {bad:?}", bad.len()),
    )
}

fn criterion_8() -> Outcome {
    let opts = CqOptions::default();
    let mut parts = Vec::new();
    let mut disagreements = 0;
    let mut undecided = 0;
    for (p, x) in corpus_specs() {
        let d = crosscheck_ndg_decomposition(&p, &x, &opts).unwrap();
        match d.consistent {
            Some(true) => {}
            Some(false) => {
                disagreements += 1;
                parts.push(format!(
                    "{}: ndg {:?}, weak-ndg {:?}, rank {}/{}",
                    p.name, d.ndg, d.weak_ndg, d.hat_rank, d.hat_rows
                ));
            }
            None => {
                undecided += 1;
                parts.push(format!("{}: undecided", p.name));
            }
        }
    }
    outcome(
        disagreements == 0 && undecided == 0,
        format!("{} fixtures, {disagreements} disagreements, {undecided} undecided {parts:?}", corpus::names().len()),
    )
}

fn main() -> ExitCode {
    let criteria: [(usize, &str, fn() -> Outcome); 8] = [
        (1, "corpus verdict tables", criterion_1),
        (2, "hierarchy never inverted", criterion_2),
        (3, "cone primitives", criterion_3),
        (4, "caratheodory reduction", criterion_4),
        (5, "halfline-min solved by all methods", criterion_5),
        (6, "multiplier divergence on zz-erratum", criterion_6),
        (7, "derivative audits", criterion_7),
        (8, "nondegeneracy decomposition cross-check", criterion_8),
    ];
    let mut unexpected = 0;
    for (id, name, run) in criteria {
        let start = Instant::now();
        let o = run();
        let known = KNOWN_FAILURES.contains(&id);
        let tag = match (o.pass, known) {
            (true, false) => "PASS",
            (false, true) => "FAIL (known)",
            (false, false) => "FAIL",
            (true, true) => "PASS (unexpected, update KNOWN_FAILURES)",
        };
        unexpected += usize::from(o.pass == known);
        println!(
            "criterion {id}: {tag} - {name} [{:.2} s] {}",
            start.elapsed().as_secs_f64(),
            o.detail
        );
    }
    if unexpected == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{unexpected} criteria differ from the expected outcome");
        ExitCode::FAILURE
    }
}
