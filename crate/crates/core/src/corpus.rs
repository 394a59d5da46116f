//! Built-in fixtures with their expected verdict tables, plus solver smoke
//! tests on the fixtures that have an objective worth minimizing.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cq::{analyze, CqName, CqOptions, CqStatus, CqVerdict};
use crate::io::{IoError, ProblemFile};
use crate::solvers::{solve, Method, SolverConfig, SolverStatus};

const SOURCES: [(&str, &str); 10] = [
    ("ex31-padded", include_str!("../corpus/ex31-padded.json")),
    ("ex32", include_str!("../corpus/ex32.json")),
    ("ex33", include_str!("../corpus/ex33.json")),
    ("zz-erratum", include_str!("../corpus/zz-erratum.json")),
    ("ex41", include_str!("../corpus/ex41.json")),
    ("ex42", include_str!("../corpus/ex42.json")),
    ("ex51", include_str!("../corpus/ex51.json")),
    ("ex52", include_str!("../corpus/ex52.json")),
    ("halfline-min", include_str!("../corpus/halfline-min.json")),
    ("interior-min", include_str!("../corpus/interior-min.json")),
];

pub fn names() -> Vec<&'static str> {
    SOURCES.iter().map(|(n, _)| *n).collect()
}

/// All fixtures, in corpus order.
pub fn all() -> Vec<ProblemFile> {
    SOURCES
        .iter()
        .map(|(name, text)| {
            let pf = ProblemFile::from_json(text).unwrap_or_else(|e| panic!("corpus {name}: {e}"));
            assert_eq!(pf.name, *name, "corpus file name");
            pf
        })
        .collect()
}

pub fn get(name: &str) -> Option<ProblemFile> {
    all().into_iter().find(|p| p.name == name)
}

/// What a smoke solve must produce.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Expectation {
    /// Converged to `x` within `tol` in the max norm.
    Converges { x: Vec<f64>, tol: f64 },
    /// Any non-converged status; the problem has no KKT point.
    NoKkt,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmokeTest {
    pub method: Method,
    pub x0: Vec<f64>,
    pub expect: Expectation,
}

/// Solver smoke tests attached to a fixture.
pub fn smoke_tests(name: &str) -> Vec<SmokeTest> {
    let all_methods = |x0: Vec<f64>, expect: Expectation| -> Vec<SmokeTest> {
        [Method::Penalty, Method::Auglag, Method::Sqp]
            .into_iter()
            .map(|method| SmokeTest {
                method,
                x0: x0.clone(),
                expect: expect.clone(),
            })
            .collect()
    };
    match name {
        "halfline-min" => all_methods(
            vec![5.0],
            Expectation::Converges {
                x: vec![1.0],
                tol: 1e-5,
            },
        ),
        "interior-min" => all_methods(
            vec![1.0, 1.0],
            Expectation::Converges {
                x: vec![0.0, 0.0],
                tol: 1e-6,
            },
        ),
        "zz-erratum" => [Method::Penalty, Method::Auglag]
            .into_iter()
            .map(|method| SmokeTest {
                method,
                x0: vec![1.0],
                expect: Expectation::NoKkt,
            })
            .collect(),
        _ => Vec::new(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerdictCheck {
    pub cq: CqName,
    pub expected: bool,
    pub got: CqStatus,
    pub matched: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmokeOutcome {
    pub test: SmokeTest,
    pub status: SolverStatus,
    pub x: Vec<f64>,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureReport {
    pub name: String,
    pub point: Vec<f64>,
    pub verdicts: Vec<CqVerdict>,
    pub checks: Vec<VerdictCheck>,
    pub smoke: Vec<SmokeOutcome>,
}

impl FixtureReport {
    pub fn mismatches(&self) -> usize {
        self.checks.iter().filter(|c| !c.matched).count()
            + self.smoke.iter().filter(|s| !s.passed).count()
    }
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error(transparent)]
    Io(#[from] IoError),
    #[error(transparent)]
    Cq(#[from] crate::cq::CqError),
    #[error(transparent)]
    Solver(#[from] crate::solvers::SolverError),
    #[error("fixture {0} has no point of interest")]
    NoPoint(String),
}

/// Checks `expected` against the verdicts at `point`; only an exact
/// HOLDS/VIOLATED answer matches.
pub fn check_expected(
    expected: &[(CqName, bool)],
    verdicts: &[CqVerdict],
) -> Vec<VerdictCheck> {
    expected
        .iter()
        .map(|&(cq, want)| {
            let got = verdicts
                .iter()
                .find(|v| v.cq == cq)
                .map_or(CqStatus::Undecided, |v| v.status);
            VerdictCheck {
                cq,
                expected: want,
                got,
                matched: got.as_bool() == Some(want),
            }
        })
        .collect()
}

/// Runs the expected table at the first point of interest and the smoke
/// solves.
pub fn run_fixture(
    pf: &ProblemFile,
    opts: &CqOptions,
    cfg: &SolverConfig,
) -> Result<FixtureReport, CorpusError> {
    let spec = pf.to_spec()?;
    let point = pf
        .points_of_interest
        .first()
        .cloned()
        .ok_or_else(|| CorpusError::NoPoint(pf.name.clone()))?;
    let expected = pf.expected_verdicts()?;
    let which: Vec<CqName> = expected.iter().map(|(c, _)| *c).collect();
    let verdicts = analyze(&spec, &point, &which, opts)?;
    let checks = check_expected(&expected, &verdicts);
    let mut smoke = Vec::new();
    for test in smoke_tests(&pf.name) {
        let r = solve(&spec, &test.x0, &cfg.clone().with_method(test.method))?;
        let passed = match &test.expect {
            Expectation::Converges { x, tol } => {
                r.status == SolverStatus::Converged
                    && r.x.iter().zip(x).all(|(a, b)| (a - b).abs() <= *tol)
            }
            Expectation::NoKkt => r.status != SolverStatus::Converged,
        };
        smoke.push(SmokeOutcome {
            test,
            status: r.status,
            x: r.x,
            passed,
        });
    }
    Ok(FixtureReport {
        name: pf.name.clone(),
        point,
        verdicts,
        checks,
        smoke,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn corpus_loads_and_parses() {
        let all = all();
        assert!(all.len() >= 9);
        for pf in &all {
            let spec = pf.to_spec().unwrap();
            assert!(!pf.points_of_interest.is_empty(), "{}", pf.name);
            assert!(!pf.expected.is_empty(), "{}", pf.name);
            assert_eq!(spec.name, pf.name);
        }
        assert!(get("ex52").is_some());
        assert!(get("nope").is_none());
    }

    #[test]
    fn check_expected_needs_exact_status() {
        let v = vec![
            CqVerdict::undecided(CqName::Ndg, "gray"),
            CqVerdict::undecided(CqName::Kkt, "gray"),
        ];
        let c = check_expected(&[(CqName::Ndg, true), (CqName::Robinson, false)], &v);
        assert!(c.iter().all(|c| !c.matched));
        assert_eq!(c[1].got, CqStatus::Undecided);
    }
}
