use nsocp::cone::{norm, project, spectral_decompose, SocVector};
use nsocp::expr::{parse, Expr, Func};
use nsocp::rank::{caratheodory_reduce, is_positively_linearly_dependent, numeric_rank, PLD_TOL, RANK_TOL};
use nsocp::solvers::{penalty_gradient, penalty_value};
use proptest::prelude::*;

fn soc(max_dim: usize) -> impl Strategy<Value = SocVector> {
    (2..=max_dim)
        .prop_flat_map(|m| prop::collection::vec(-10.0..10.0f64, m))
        .prop_map(|v| SocVector::new(v).unwrap())
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

proptest! {
    #[test]
    fn moreau_decomposition(y in soc(6)) {
        let p = project(&y);
        let q = project(&y.neg());
        let tol = 1e-10 * (1.0 + y.norm());
        prop_assert!(dist(&p.sub(&q).into_vec(), y.as_slice()) <= tol);
        prop_assert!(p.dot(&q).abs() <= tol * (1.0 + y.norm()));
        prop_assert!(p.lambda1() >= -tol && q.lambda1() >= -tol);
    }

    #[test]
    fn projection_is_idempotent(y in soc(6)) {
        let p = project(&y);
        prop_assert!(dist(project(&p).as_slice(), p.as_slice()) <= 1e-10 * (1.0 + p.norm()));
    }

    #[test]
    fn projection_is_nonexpansive(pair in (2..=6usize).prop_flat_map(|m| (
        prop::collection::vec(-10.0..10.0f64, m),
        prop::collection::vec(-10.0..10.0f64, m),
    ))) {
        let y = SocVector::new(pair.0).unwrap();
        let z = SocVector::new(pair.1).unwrap();
        let lhs = dist(project(&y).as_slice(), project(&z).as_slice());
        prop_assert!(lhs <= dist(y.as_slice(), z.as_slice()) + 1e-10);
    }

    #[test]
    fn spectral_reconstruction(y in soc(6)) {
        let s = spectral_decompose(&y, None).unwrap();
        prop_assert!(dist(&s.reconstruct(), y.as_slice()) <= 1e-10 * (1.0 + y.norm()));
        prop_assert!(s.lambda1 <= s.lambda2);
        prop_assert!((norm(&s.w) - 1.0).abs() <= 1e-12);
    }
}

fn family(max_n: usize, max_k: usize) -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<f64>)> {
    (1..=max_n, 1..=max_k).prop_flat_map(|(n, k)| {
        (
            prop::collection::vec(prop::collection::vec(-5.0..5.0f64, n), k),
            prop::collection::vec(prop_oneof![-3.0..-0.1f64, 0.1..3.0f64], k),
            prop::collection::vec((0..k, -2.0..2.0f64), 0..3),
        )
            .prop_map(|(mut vs, alphas, copies)| {
                // Scaled copies force dependence.
                let mut a = alphas;
                for (src, s) in copies {
                    let v: Vec<f64> = vs[src].iter().map(|x| s * x).collect();
                    vs.push(v);
                    a.push(if s >= 0.0 { 0.7 } else { -0.7 });
                }
                (vs, a)
            })
    })
}

proptest! {
    #[test]
    fn caratheodory_postconditions((vs, alphas) in family(4, 7)) {
        let r = caratheodory_reduce(&vs, &alphas);
        let n = vs[0].len();
        let sum = |idx: &[usize], coef: &[f64]| -> Vec<f64> {
            (0..n).map(|r| idx.iter().zip(coef).map(|(&i, c)| c * vs[i][r]).sum()).collect()
        };
        let all: Vec<usize> = (0..vs.len()).collect();
        let target = sum(&all, &alphas);
        let scale = 1.0 + alphas.iter().zip(&vs).map(|(a, v)| a.abs() * norm(v)).sum::<f64>();
        prop_assert!(dist(&sum(&r.subset, &r.alphas), &target) <= 1e-10 * scale);
        let cols: Vec<Vec<f64>> = r.subset.iter().map(|&i| vs[i].clone()).collect();
        prop_assert_eq!(numeric_rank(&cols, RANK_TOL), cols.len());
        for (&i, a) in r.subset.iter().zip(&r.alphas) {
            prop_assert!(a * alphas[i] > 0.0);
        }
    }
}

fn cross(a: &[i64], b: &[i64]) -> i64 {
    a[0] * b[1] - a[1] * b[0]
}

/// Exact test for `0 ∈ conv(vs)` in the plane via Carathéodory.
fn origin_in_hull(vs: &[Vec<i64>]) -> bool {
    let k = vs.len();
    if vs.iter().any(|v| v[0] == 0 && v[1] == 0) {
        return true;
    }
    for i in 0..k {
        for j in i + 1..k {
            let (a, b) = (&vs[i], &vs[j]);
            if cross(a, b) == 0 && a[0] * b[0] + a[1] * b[1] < 0 {
                return true;
            }
            for c in &vs[j + 1..] {
                let s = [cross(a, b), cross(b, c), cross(c, a)];
                if s.iter().all(|&x| x >= 0) || s.iter().all(|&x| x <= 0) {
                    if s.iter().any(|&x| x != 0) {
                        return true;
                    }
                }
            }
        }
    }
    false
}

proptest! {
    #[test]
    fn pld_matches_planar_geometry(vs in prop::collection::vec(prop::collection::vec(-3i64..=3, 2), 1..6)) {
        let fv: Vec<Vec<f64>> = vs.iter().map(|v| v.iter().map(|&x| x as f64).collect()).collect();
        let got = is_positively_linearly_dependent(&fv, PLD_TOL).is_some();
        prop_assert_eq!(got, origin_in_hull(&vs), "{:?}", vs);
    }
}

fn expr_tree() -> impl Strategy<Value = Expr> {
    let leaf = prop_oneof![
        (0..3usize).prop_map(Expr::Var),
        (-4.0..4.0f64).prop_map(|c| Expr::Const((c * 8.0).round() / 8.0)),
    ];
    leaf.prop_recursive(4, 24, 2, |inner| {
        prop_oneof![
            inner.clone().prop_map(|a| Expr::Neg(Box::new(a))),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::Add(Box::new(a), Box::new(b))),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::Sub(Box::new(a), Box::new(b))),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::Mul(Box::new(a), Box::new(b))),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::Div(Box::new(a), Box::new(b))),
            (inner.clone(), 0..4i32).prop_map(|(a, p)| Expr::Pow(Box::new(a), Box::new(Expr::Const(p as f64)))),
            (inner.clone(), prop_oneof![
                Just(Func::Sin), Just(Func::Cos), Just(Func::Exp), Just(Func::Log), Just(Func::Sqrt)
            ])
            .prop_map(|(a, f)| Expr::Func(f, Box::new(a))),
        ]
    })
}

proptest! {
    #[test]
    fn print_parse_round_trip(e in expr_tree()) {
        let text = e.to_string();
        let back = parse(&text, 3).unwrap();
        prop_assert_eq!(back.to_string(), text.clone());
        let x = [0.3, -0.7, 1.1];
        match (e.eval(&x), back.eval(&x)) {
            (Ok(a), Ok(b)) => prop_assert!(a == b || (a.is_nan() && b.is_nan()), "{text}: {a} vs {b}"),
            (Err(_), Err(_)) => {}
            (a, b) => prop_assert!(false, "{text}: {a:?} vs {b:?}"),
        }
    }

    #[test]
    fn gradient_matches_central_differences(
        e in expr_tree(),
        x in prop::collection::vec(-2.0..2.0f64, 3),
    ) {
        let Ok(g) = e.grad(&x) else { return Ok(()) };
        let f0 = e.eval(&x).unwrap();
        prop_assume!(f0.abs() < 1e3 && g.iter().all(|v| v.is_finite() && v.abs() < 1e3));
        for i in 0..3 {
            let h = 1e-6 * (1.0 + x[i].abs());
            let mut a = x.clone();
            let mut b = x.clone();
            a[i] += h;
            b[i] -= h;
            let (Ok(fa), Ok(fb)) = (e.eval(&a), e.eval(&b)) else { return Ok(()) };
            let fd = (fa - fb) / (2.0 * h);
            // Skip points next to a kink or pole of the tree.
            let (Ok(ga), Ok(gb)) = (e.grad(&a), e.grad(&b)) else { return Ok(()) };
            prop_assume!((ga[i] - gb[i]).abs() <= 1e-2 * (1.0 + g[i].abs()));
            prop_assert!((fd - g[i]).abs() <= 1e-5 * (1.0 + g[i].abs()), "{e}: d{i} fd {fd} vs {}", g[i]);
        }
    }
}

proptest! {
    #[test]
    fn penalty_gradient_matches_differences(
        x in prop::collection::vec(-2.0..2.0f64, 2),
        mt in prop::collection::vec(-1.0..1.0f64, 3),
        rho in 0.5..50.0f64,
    ) {
        let p = nsocp::model::ProblemSpec::parse(
            "p", 2, "x1*x2 + x1^2", &[vec!["x1 + 1", "x2", "x1^2 - x2"]],
        ).unwrap();
        let shift = vec![project(&SocVector::new(mt).unwrap())];
        for mu in [None, Some(&shift[..])] {
            let g = penalty_gradient(&p, &x, rho, mu).unwrap();
            for i in 0..2 {
                let h = 1e-6 * (1.0 + x[i].abs());
                let mut a = x.clone();
                let mut b = x.clone();
                a[i] += h;
                b[i] -= h;
                let fd = (penalty_value(&p, &a, rho, mu).unwrap() - penalty_value(&p, &b, rho, mu).unwrap()) / (2.0 * h);
                prop_assert!((fd - g[i]).abs() <= 1e-5 * (1.0 + g[i].abs()) * rho.max(1.0), "{fd} vs {}", g[i]);
            }
        }
    }
}
