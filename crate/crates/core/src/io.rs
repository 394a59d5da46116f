//! Problem files (JSON) and run records (JSONL). Numbers are written with 17
//! significant digits so every `f64` survives a round trip.

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cq::{CqName, CqVerdict};
use crate::model::{IterateLog, ModelError, ProblemSpec};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("line {line}, column {column}: {message}")]
    Json {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid problem: {0}")]
    Model(#[from] ModelError),
    #[error("expected table names unknown condition '{0}'")]
    UnknownCondition(String),
    #[error("n = {n} but point of interest {index} has {got} coordinates")]
    PointDimension { n: usize, index: usize, got: usize },
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl From<serde_json::Error> for IoError {
    fn from(e: serde_json::Error) -> Self {
        if e.is_io() {
            return IoError::Io(e.into());
        }
        IoError::Json {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintFile {
    pub dim: usize,
    pub components: Vec<String>,
}

/// On-disk problem description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    pub n: usize,
    pub objective: String,
    pub constraints: Vec<ConstraintFile>,
    #[serde(default)]
    pub points_of_interest: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub expected: BTreeMap<String, bool>,
}

impl ProblemFile {
    pub fn from_json(text: &str) -> Result<Self, IoError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self, IoError> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        to_json_pretty(self)
    }

    /// Validates and parses every expression.
    pub fn to_spec(&self) -> Result<ProblemSpec, IoError> {
        for (j, c) in self.constraints.iter().enumerate() {
            if c.dim != c.components.len() {
                return Err(ModelError::ComponentCount {
                    block: j,
                    dim: c.dim,
                    components: c.components.len(),
                }
                .into());
            }
        }
        for (index, p) in self.points_of_interest.iter().enumerate() {
            if p.len() != self.n {
                return Err(IoError::PointDimension {
                    n: self.n,
                    index,
                    got: p.len(),
                });
            }
        }
        for key in self.expected.keys() {
            key.parse::<CqName>()
                .map_err(|_| IoError::UnknownCondition(key.clone()))?;
        }
        let comps: Vec<Vec<&str>> = self
            .constraints
            .iter()
            .map(|c| c.components.iter().map(String::as_str).collect())
            .collect();
        let mut spec = ProblemSpec::parse(&self.name, self.n, &self.objective, &comps)?;
        spec.points_of_interest = self.points_of_interest.clone();
        spec.expected = self.expected.clone();
        Ok(spec)
    }

    /// Prints a parsed problem back to text.
    pub fn from_spec(spec: &ProblemSpec) -> Self {
        Self {
            name: spec.name.clone(),
            description: None,
            n: spec.n,
            objective: spec.objective.to_string(),
            constraints: spec
                .constraints
                .iter()
                .map(|b| ConstraintFile {
                    dim: b.dim(),
                    components: b.components.iter().map(ToString::to_string).collect(),
                })
                .collect(),
            points_of_interest: spec.points_of_interest.clone(),
            expected: spec.expected.clone(),
        }
    }

    /// Expected verdicts with parsed names.
    pub fn expected_verdicts(&self) -> Result<Vec<(CqName, bool)>, IoError> {
        self.expected
            .iter()
            .map(|(k, v)| {
                k.parse::<CqName>()
                    .map(|c| (c, *v))
                    .map_err(|_| IoError::UnknownCondition(k.clone()))
            })
            .collect()
    }
}

/// Opening line of a run record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub problem: String,
    pub seed: u64,
    pub config: serde_json::Value,
}

/// Closing line of a run record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Footer {
    pub status: String,
    pub wall_time_s: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<serde_json::Value>,
}

/// One line of a run record, tagged by `"type"`.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum RunLine {
    Header(Header),
    Iterate(IterateLog),
    Verdict(CqVerdict),
    Footer(Footer),
}

// Derived internally tagged deserialization buffers maps with string keys,
// which breaks integer-keyed maps such as slice choices.
impl<'de> Deserialize<'de> for RunLine {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        use serde::de::Error;
        let mut v = serde_json::Value::deserialize(d)?;
        let tag = v
            .as_object_mut()
            .and_then(|m| m.remove("type"))
            .ok_or_else(|| D::Error::missing_field("type"))?;
        fn body<T: serde::de::DeserializeOwned, E: Error>(v: serde_json::Value) -> Result<T, E> {
            serde_json::from_value(v).map_err(E::custom)
        }
        let line = match tag.as_str() {
            Some("header") => RunLine::Header(body(v)?),
            Some("iterate") => RunLine::Iterate(body(v)?),
            Some("verdict") => RunLine::Verdict(body(v)?),
            Some("footer") => RunLine::Footer(body(v)?),
            _ => return Err(D::Error::custom(format!("unknown line type {tag}"))),
        };
        Ok(line)
    }
}

impl RunLine {
    pub fn header<C: Serialize>(command: &str, problem: &str, seed: u64, config: &C) -> Self {
        RunLine::Header(Header {
            tool: "nsocp".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            problem: problem.into(),
            seed,
            config: serde_json::to_value(config).expect("config serializes"),
        })
    }

    pub fn footer(status: &str, wall_time_s: f64, detail: Option<serde_json::Value>) -> Self {
        RunLine::Footer(Footer {
            status: status.into(),
            wall_time_s,
            detail,
        })
    }
}

/// Writes `{:.16e}` for every float, i.e. 17 significant digits.
#[derive(Debug, Clone, Copy, Default)]
pub struct Sig17;

impl serde_json::ser::Formatter for Sig17 {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        write!(writer, "{value:.16e}")
    }

    fn write_f32<W: ?Sized + Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(writer, f64::from(value))
    }
}

/// Single-line JSON with 17 significant digits.
pub fn to_json_line<T: Serialize + ?Sized>(value: &T) -> String {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, Sig17);
    value.serialize(&mut ser).expect("in-memory serialization");
    String::from_utf8(buf).expect("json is utf-8")
}

/// Indented JSON; floats keep the shortest round-trip form.
pub fn to_json_pretty<T: Serialize + ?Sized>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("in-memory serialization")
}

/// Renders a run record as JSONL.
pub fn render_run(lines: &[RunLine]) -> String {
    let mut out = String::new();
    for l in lines {
        out.push_str(&to_json_line(l));
        out.push('\n');
    }
    out
}

/// Writes a run record through a temporary file and a rename.
pub fn write_run(path: &Path, lines: &[RunLine]) -> Result<(), IoError> {
    let tmp = path.with_extension("jsonl.partial");
    fs::write(&tmp, render_run(lines))?;
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn parse_run(text: &str) -> Result<Vec<RunLine>, IoError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| IoError::Json {
                line: i + 1,
                column: e.column(),
                message: e.to_string(),
            })
        })
        .collect()
}

pub fn read_run(path: &Path) -> Result<Vec<RunLine>, IoError> {
    parse_run(&fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cone::SocVector;
    use crate::model::KktResidual;

    const HALFLINE: &str = r#"{
        "name": "halfline-min",
        "n": 1,
        "objective": "x1",
        "constraints": [{"dim": 2, "components": ["x1", "1"]}],
        "points_of_interest": [[1.0]],
        "expected": {"kkt": true}
    }"#;

    #[test]
    fn parses_problem_file() {
        let pf = ProblemFile::from_json(HALFLINE).unwrap();
        let spec = pf.to_spec().unwrap();
        assert_eq!(spec.n, 1);
        assert_eq!(spec.constraints.len(), 1);
        assert_eq!(pf.expected_verdicts().unwrap(), vec![(CqName::Kkt, true)]);
    }

    #[test]
    fn malformed_json_reports_position() {
        let err = ProblemFile::from_json("{\n  \"name\": \"a\",\n  \"n\": }").unwrap_err();
        match err {
            IoError::Json { line, column, .. } => assert_eq!((line, column), (3, 8)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn validation_errors() {
        let mut pf = ProblemFile::from_json(HALFLINE).unwrap();
        pf.constraints[0].dim = 3;
        assert!(matches!(
            pf.to_spec(),
            Err(IoError::Model(ModelError::ComponentCount { block: 0, .. }))
        ));
        let mut pf = ProblemFile::from_json(HALFLINE).unwrap();
        pf.expected.insert("licq".into(), true);
        assert!(matches!(pf.to_spec(), Err(IoError::UnknownCondition(_))));
        let mut pf = ProblemFile::from_json(HALFLINE).unwrap();
        pf.points_of_interest.push(vec![0.0, 1.0]);
        assert!(matches!(pf.to_spec(), Err(IoError::PointDimension { index: 1, .. })));
        let mut pf = ProblemFile::from_json(HALFLINE).unwrap();
        pf.constraints[0].components[0] = "x1 +".into();
        assert!(matches!(
            pf.to_spec(),
            Err(IoError::Model(ModelError::Component { block: 0, component: 0, .. }))
        ));
    }

    #[test]
    fn spec_round_trip() {
        let pf = ProblemFile::from_json(HALFLINE).unwrap();
        let back = ProblemFile::from_spec(&pf.to_spec().unwrap());
        assert_eq!(back.to_spec().unwrap(), pf.to_spec().unwrap());
    }

    #[test]
    fn floats_carry_17_digits() {
        assert_eq!(to_json_line(&[0.1_f64]), "[1.0000000000000001e-1]");
        assert_eq!(to_json_line(&1.0_f64), "1.0000000000000000e0");
        assert_eq!(to_json_line(&f64::NAN), "null");
        let v: f64 = serde_json::from_str(&to_json_line(&(1.0_f64 / 3.0))).unwrap();
        assert_eq!(v, 1.0 / 3.0);
    }

    #[test]
    fn verdict_lines_round_trip() {
        use crate::cq::{analyze, CqOptions};
        let spec = ProblemFile::from_json(
            r#"{"name": "e", "n": 1, "objective": "0",
                "constraints": [{"dim": 3, "components": ["x1^2", "x1", "0"]}]}"#,
        )
        .unwrap()
        .to_spec()
        .unwrap();
        let v = analyze(&spec, &[0.0], &CqName::ALL, &CqOptions::default()).unwrap();
        let lines: Vec<RunLine> = v.into_iter().map(RunLine::Verdict).collect();
        assert_eq!(parse_run(&render_run(&lines)).unwrap(), lines);
        assert!(parse_run("{\"type\": \"bogus\"}").is_err());
    }

    #[test]
    fn run_record_round_trip() {
        let lines = vec![
            RunLine::header("solve", "halfline-min", 7, &serde_json::json!({"rho0": 1.0})),
            RunLine::Iterate(IterateLog {
                k: 1,
                x: vec![0.3],
                mu: vec![SocVector::new(vec![1.0, -1.0]).unwrap()],
                delta: None,
                residuals: KktResidual {
                    stationarity: 1e-9,
                    feasibility: 0.0,
                    complementarity: 2.5e-17,
                },
                rho: 10.0,
                inner_iters: 4,
            }),
            RunLine::footer("converged", 0.25, None),
        ];
        let text = render_run(&lines);
        assert_eq!(text.lines().count(), 3);
        assert_eq!(parse_run(&text).unwrap(), lines);
        let dir = std::env::temp_dir().join(format!("nsocp-io-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        let path = dir.join("run.jsonl");
        write_run(&path, &lines).unwrap();
        assert_eq!(read_run(&path).unwrap(), lines);
        fs::remove_dir_all(&dir).unwrap();
    }
}
