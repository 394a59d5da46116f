use super::*;
use crate::model::ProblemSpec;

fn spec(n: usize, blocks: &[Vec<&str>]) -> ProblemSpec {
    ProblemSpec::parse("t", n, "0", blocks).unwrap()
}

fn status(p: &ProblemSpec, x: &[f64], cq: CqName) -> CqStatus {
    Analyzer::new(p, x, CqOptions::default())
        .unwrap()
        .check(cq)
        .unwrap()
        .status
}

fn ex31_padded() -> ProblemSpec {
    spec(2, &[vec!["x1", "x2", "0", "0"]])
}

fn ex32() -> ProblemSpec {
    spec(2, &[vec!["x1", "x2", "x2"]])
}

fn ex33() -> ProblemSpec {
    spec(1, &[vec!["4*x1", "2*x1", "x1"]])
}

fn zz() -> ProblemSpec {
    ProblemSpec::parse("zz", 1, "-x1", &[vec!["x1", "x1 + x1^2"]]).unwrap()
}

fn ex41() -> ProblemSpec {
    spec(1, &[vec!["-x1", "x1", "x1"]])
}

fn ex42() -> ProblemSpec {
    spec(2, &[vec!["2*x1", "x2^2"]])
}

fn ex51() -> ProblemSpec {
    spec(1, &[vec!["-x1", "x1"]])
}

fn ex52() -> ProblemSpec {
    spec(1, &[vec!["x1^2", "x1", "0"]])
}

#[test]
fn family_d_zz_is_zero() {
    let w: SliceChoice = [(0, vec![1.0])].into_iter().collect();
    let sel = SubsetSelection {
        jminus: vec![0],
        ..Default::default()
    };
    let fam = build_family_d(&zz(), &[0.0], &sel, &w).unwrap();
    assert_eq!(fam.vectors, vec![vec![0.0]]);
}

#[test]
fn family_d_ex41_values() {
    let s = 0.5f64.sqrt();
    let w: SliceChoice = [(0, vec![s, s])].into_iter().collect();
    let sel = SubsetSelection {
        jminus: vec![0],
        jplus: vec![0],
        ..Default::default()
    };
    let fam = build_family_d(&ex41(), &[0.0], &sel, &w).unwrap();
    // Dgᵀ(1, ∓w) = -1 ∓ √2
    assert!((fam.vectors[0][0] - (-1.0 - 2f64.sqrt())).abs() < 1e-14);
    assert!((fam.vectors[1][0] - (-1.0 + 2f64.sqrt())).abs() < 1e-14);
}

#[test]
fn family_d_empty_and_zero_hat() {
    let fam = build_family_d(&ex32(), &[0.0, 0.0], &SubsetSelection::default(), &SliceChoice::new())
        .unwrap();
    assert!(fam.is_empty());
    let sel = SubsetSelection {
        jb: vec![0],
        ..Default::default()
    };
    assert_eq!(
        build_family_d(&ex32(), &[0.0, 0.0], &sel, &SliceChoice::new()),
        Err(CqError::ZeroHatOnBoundary { block: 0 })
    );
}

#[test]
fn nondegeneracy_examples() {
    assert_eq!(status(&ex32(), &[0.0, 0.0], CqName::Ndg), CqStatus::Violated);
    assert_eq!(status(&spec(2, &[vec!["x1", "x2"]]), &[0.0, 0.0], CqName::Ndg), CqStatus::Holds);
    assert_eq!(status(&ex31_padded(), &[0.0, 0.0], CqName::Ndg), CqStatus::Violated);
}

#[test]
fn nondegeneracy_is_scale_invariant() {
    let a = spec(2, &[vec!["x1 + 1", "x1 + x2", "1"]]);
    let b = spec(2, &[vec!["1000*(x1 + 1)", "1000*(x1 + x2)", "1000"]]);
    let x = [0.0, 0.0];
    assert_eq!(status(&a, &x, CqName::Ndg), status(&b, &x, CqName::Ndg));
}

#[test]
fn robinson_examples() {
    assert_eq!(status(&ex33(), &[0.0], CqName::Robinson), CqStatus::Holds);
    assert_eq!(status(&ex42(), &[0.0, 0.0], CqName::Robinson), CqStatus::Holds);
    let v = check_robinson(&zz(), &[0.0], &CqOptions::default()).unwrap();
    assert_eq!(v.status, CqStatus::Violated);
    let cv = &v.witness.unwrap().cone_vector.unwrap()[0];
    // Kernel vector proportional to (1, -1).
    assert!(cv[0] > 0.0 && (cv[0] + cv[1]).abs() < 1e-8 * cv[0]);
}

#[test]
fn weak_ndg_examples() {
    assert_eq!(status(&ex32(), &[0.0, 0.0], CqName::WeakNdg), CqStatus::Holds);
    assert_eq!(status(&ex31_padded(), &[0.0, 0.0], CqName::WeakNdg), CqStatus::Holds);
    let v = falsify_weak_cq(&ex33(), &[0.0], CqName::WeakNdg, &CqOptions::default()).unwrap();
    assert_eq!(v.status, CqStatus::Violated);
    let w = v.witness.unwrap();
    assert_eq!(w.direction, Some(vec![1.0]));
    let wbar = &w.slices[&0];
    let r5 = 5f64.sqrt();
    assert!((wbar[0] - 2.0 / r5).abs() < 1e-9 && (wbar[1] - 1.0 / r5).abs() < 1e-9);
}

#[test]
fn weak_robinson_ex41_fails() {
    assert_eq!(status(&ex41(), &[0.0], CqName::WeakRobinson), CqStatus::Violated);
    assert_eq!(status(&ex41(), &[0.0], CqName::WeakCpld), CqStatus::Holds);
}

#[test]
fn zz_constant_rank_fails() {
    for cq in [CqName::WeakCrcq, CqName::WeakCpld] {
        let v = falsify_constant_rank(&zz(), &[0.0], cq, &CqOptions::default()).unwrap();
        assert_eq!(v.status, CqStatus::Violated, "{cq}");
        let s = v.witness.unwrap().subsets.unwrap();
        assert_eq!(s.jminus.len() + s.jplus.len(), 1);
    }
    assert_eq!(status(&zz(), &[0.0], CqName::Kkt), CqStatus::Violated);
}

#[test]
fn ex42_weak_crcq_fails() {
    assert_eq!(status(&ex42(), &[0.0, 0.0], CqName::WeakCrcq), CqStatus::Violated);
}

#[test]
fn ex51_sequential_hold() {
    let p = ex51();
    assert_eq!(status(&p, &[0.0], CqName::SeqCrcq), CqStatus::Holds);
    assert_eq!(status(&p, &[0.0], CqName::SeqCpld), CqStatus::Holds);
    assert_eq!(status(&p, &[0.0], CqName::Ndg), CqStatus::Violated);
    assert_eq!(status(&p, &[0.0], CqName::Robinson), CqStatus::Violated);
}

#[test]
fn ex52_weak_holds_sequential_fails() {
    let p = ex52();
    assert_eq!(status(&p, &[0.0], CqName::WeakCpld), CqStatus::Holds);
    let v = Analyzer::new(&p, &[0.0], CqOptions::default())
        .unwrap()
        .check(CqName::SeqCpld)
        .unwrap();
    assert_eq!(v.status, CqStatus::Violated);
    let w = v.witness.unwrap();
    // The dependent member is Dg(0)ᵀ(1, ∓w̄) = ∓w̄_1 = 0.
    assert!(w.slices[&0][0].abs() < 1e-9);
}

#[test]
fn kkt_exists_at_halfline_minimizer() {
    let p = ProblemSpec::parse("h", 1, "x1", &[vec!["x1", "1"]]).unwrap();
    assert_eq!(status(&p, &[1.0], CqName::Kkt), CqStatus::Holds);
}

#[test]
fn crosscheck_examples() {
    let opts = CqOptions::default();
    for (p, x) in [
        (ex32(), vec![0.0, 0.0]),
        (ex31_padded(), vec![0.0, 0.0]),
        (spec(2, &[vec!["x1", "x2"]]), vec![0.0, 0.0]),
    ] {
        let r = crosscheck_ndg_decomposition(&p, &x, &opts).unwrap();
        assert_eq!(r.consistent, Some(true), "{r:?}");
    }
    let r = crosscheck_ndg_decomposition(&ex32(), &[0.0, 0.0], &opts).unwrap();
    assert_eq!((r.ndg, r.weak_ndg, r.hat_full_row_rank), (CqStatus::Violated, CqStatus::Holds, false));
}

#[test]
fn verdicts_are_deterministic() {
    let a = analyze(&ex52(), &[0.0], &CqName::ALL, &CqOptions::default()).unwrap();
    let b = analyze(&ex52(), &[0.0], &CqName::ALL, &CqOptions::default()).unwrap();
    assert_eq!(a, b);
}

#[test]
fn subset_cap_is_enforced() {
    let blocks: Vec<Vec<&str>> = (0..13).map(|_| vec!["x1", "x1"]).collect();
    let p = spec(1, &blocks);
    let opts = CqOptions::default();
    assert!(matches!(
        falsify_constant_rank(&p, &[0.0], CqName::WeakCrcq, &opts),
        Err(CqError::SubsetCapExceeded { count: 13, cap: 12 })
    ));
}

#[test]
fn cq_names_round_trip() {
    for c in CqName::ALL {
        assert_eq!(c.as_str().parse::<CqName>().unwrap(), c);
        let js = serde_json::to_string(&c).unwrap();
        assert_eq!(js, format!("\"{}\"", c.as_str()));
    }
    assert!("bogus".parse::<CqName>().is_err());
}
