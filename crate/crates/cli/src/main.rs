use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand};

use nsocp::corpus;
use nsocp::cq::{analyze, CqName, CqOptions, CqStatus};
use nsocp::io::{self, ProblemFile, RunLine};
use nsocp::model::kkt_residual;
use nsocp::solvers::{solve, Method, SolverConfig};

const EXIT_ERROR: u8 = 1;
const EXIT_MISMATCH: u8 = 4;
const SEED_ENV: &str = "NSOCP_SEED";

#[derive(Parser)]
#[command(name = "nsocp", version, about = "Nonlinear second-order cone programming toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve a problem and write the iterate log as JSONL.
    Solve {
        /// Problem JSON file, or the name of a corpus fixture.
        #[arg(long)]
        problem: String,
        #[arg(long, default_value = "auglag")]
        method: Method,
        /// Starting point as comma-separated values (default: zeros).
        #[arg(long)]
        x0: Option<String>,
        /// Run record destination (default: stdout).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Solver settings as a JSON file or inline JSON object; missing
        /// fields keep their defaults.
        #[arg(long)]
        config: Option<String>,
    },
    /// Check constraint qualifications at a feasible point.
    Cq {
        /// Problem JSON file, or the name of a corpus fixture.
        #[arg(long)]
        problem: String,
        /// Point as comma-separated values (default: first point of interest).
        #[arg(long)]
        at: Option<String>,
        /// Comma-separated conditions (default: the expected table, else all).
        #[arg(long, value_delimiter = ',')]
        which: Vec<CqName>,
        /// Random seed; the NSOCP_SEED environment variable takes precedence.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Multi-start count for conic independence searches.
        #[arg(long)]
        budget: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Built-in fixtures.
    Corpus {
        #[command(subcommand)]
        action: CorpusAction,
    },
}

#[derive(Subcommand)]
enum CorpusAction {
    /// List fixture names.
    List,
    /// Check every fixture's expected table and run the solver smoke tests.
    Run {
        /// Only run fixtures whose name contains this string.
        #[arg(long)]
        filter: Option<String>,
        /// Directory for one JSONL report per fixture.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_ERROR)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_ERROR)
        }
    }
}

fn run(cli: Cli) -> Result<u8> {
    match cli.command {
        Command::Solve {
            problem,
            method,
            x0,
            out,
            config,
        } => cmd_solve(&problem, method, x0.as_deref(), out.as_deref(), config.as_deref()),
        Command::Cq {
            problem,
            at,
            which,
            seed,
            budget,
            out,
        } => cmd_cq(&problem, at.as_deref(), &which, effective_seed(seed)?, budget, out.as_deref()),
        Command::Corpus { action } => match action {
            CorpusAction::List => {
                for pf in corpus::all() {
                    println!("{:14} {}", pf.name, pf.description.unwrap_or_default());
                }
                Ok(0)
            }
            CorpusAction::Run { filter, out, seed } => {
                cmd_corpus_run(filter.as_deref(), out.as_deref(), effective_seed(seed)?)
            }
        },
    }
}

fn effective_seed(flag: u64) -> Result<u64> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .with_context(|| format!("{SEED_ENV}='{v}' is not an unsigned integer")),
        Err(_) => Ok(flag),
    }
}

fn load_problem(arg: &str) -> Result<ProblemFile> {
    let path = Path::new(arg);
    if path.exists() {
        return ProblemFile::load(path).with_context(|| format!("reading {}", path.display()));
    }
    corpus::get(arg).ok_or_else(|| anyhow!("no file or corpus fixture named '{arg}'"))
}

fn parse_point(text: &str, n: usize, what: &str) -> Result<Vec<f64>> {
    let v = text
        .split(',')
        .enumerate()
        .map(|(i, s)| {
            s.trim()
                .parse::<f64>()
                .with_context(|| format!("{what}: entry {} ('{}') is not a number", i + 1, s.trim()))
        })
        .collect::<Result<Vec<_>>>()?;
    if v.len() != n {
        bail!("{what}: expected {n} values, got {}", v.len());
    }
    Ok(v)
}

fn load_config(arg: Option<&str>) -> Result<SolverConfig> {
    let Some(arg) = arg else {
        return Ok(SolverConfig::default());
    };
    let text = if arg.trim_start().starts_with('{') {
        arg.to_string()
    } else {
        std::fs::read_to_string(arg).with_context(|| format!("reading config {arg}"))?
    };
    let cfg: SolverConfig = serde_json::from_str(&text).map_err(|e| {
        anyhow!("config: line {}, column {}: {e}", e.line(), e.column())
    })?;
    cfg.validate()?;
    Ok(cfg)
}

fn emit(out: Option<&Path>, lines: &[RunLine]) -> Result<()> {
    match out {
        Some(p) => io::write_run(p, lines).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{}", io::render_run(lines));
            Ok(())
        }
    }
}

fn cmd_solve(
    problem: &str,
    method: Method,
    x0: Option<&str>,
    out: Option<&Path>,
    config: Option<&str>,
) -> Result<u8> {
    let pf = load_problem(problem)?;
    let spec = pf.to_spec()?;
    let cfg = load_config(config)?.with_method(method);
    let x0 = match x0 {
        Some(t) => parse_point(t, spec.n, "--x0")?,
        None => vec![0.0; spec.n],
    };
    let start = Instant::now();
    let r = solve(&spec, &x0, &cfg)?;
    let wall = start.elapsed().as_secs_f64();
    let residuals = if r.mu.is_empty() {
        None
    } else {
        Some(kkt_residual(&spec, &r.x, &r.mu)?)
    };
    let mut lines = vec![RunLine::header("solve", &pf.name, 0, &cfg)];
    lines.extend(r.logs.iter().cloned().map(RunLine::Iterate));
    lines.push(RunLine::footer(
        serde_json::to_value(r.status)?.as_str().unwrap_or_default(),
        wall,
        Some(serde_json::json!({
            "x": r.x,
            "mu": r.mu,
            "residuals": residuals,
            "outer_iterations": r.logs.len(),
            "note": r.note,
        })),
    ));
    emit(out, &lines)?;
    let code = r.status.exit_code() as u8;
    if out.is_some() {
        eprintln!("{}: {:?} after {} outer iterations", pf.name, r.status, r.logs.len());
    }
    Ok(code)
}

fn cmd_cq(
    problem: &str,
    at: Option<&str>,
    which: &[CqName],
    seed: u64,
    budget: Option<usize>,
    out: Option<&Path>,
) -> Result<u8> {
    let pf = load_problem(problem)?;
    let spec = pf.to_spec()?;
    let point = match at {
        Some(t) => parse_point(t, spec.n, "--at")?,
        None => pf
            .points_of_interest
            .first()
            .cloned()
            .ok_or_else(|| anyhow!("--at is required: the problem lists no point of interest"))?,
    };
    let expected = pf.expected_verdicts()?;
    let which: Vec<CqName> = if !which.is_empty() {
        which.to_vec()
    } else if !expected.is_empty() {
        expected.iter().map(|(c, _)| *c).collect()
    } else {
        CqName::ALL.to_vec()
    };
    let mut opts = CqOptions::default().with_seed(seed);
    if let Some(b) = budget {
        opts.budget.starts = b;
    }
    let start = Instant::now();
    let verdicts = analyze(&spec, &point, &which, &opts)?;
    let wall = start.elapsed().as_secs_f64();
    let relevant: Vec<(CqName, bool)> = expected
        .into_iter()
        .filter(|(c, _)| which.contains(c))
        .collect();
    let checks = corpus::check_expected(&relevant, &verdicts);
    let mismatched = checks.iter().any(|c| !c.matched);

    let mut lines = vec![RunLine::header("cq", &pf.name, seed, &opts)];
    lines.extend(verdicts.iter().cloned().map(RunLine::Verdict));
    lines.push(RunLine::footer(
        if mismatched { "mismatch" } else { "ok" },
        wall,
        Some(serde_json::json!({ "point": point, "checks": checks })),
    ));
    emit(out, &lines)?;
    for v in &verdicts {
        eprintln!("{:14} {:?}", v.cq.as_str(), v.status);
    }
    Ok(if mismatched { EXIT_MISMATCH } else { 0 })
}

fn cmd_corpus_run(filter: Option<&str>, out: Option<&Path>, seed: u64) -> Result<u8> {
    if let Some(dir) = out {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let opts = CqOptions::default().with_seed(seed);
    let cfg = SolverConfig::default();
    let fixtures: Vec<ProblemFile> = corpus::all()
        .into_iter()
        .filter(|p| filter.map_or(true, |f| p.name.contains(f)))
        .collect();
    if fixtures.is_empty() {
        bail!("no fixture matches '{}'", filter.unwrap_or_default());
    }
    let mut total = 0;
    println!("{:14} {:>7} {:>6} {:>8}", "fixture", "checks", "smoke", "result");
    for pf in &fixtures {
        let start = Instant::now();
        let report = corpus::run_fixture(pf, &opts, &cfg)?;
        let wall = start.elapsed().as_secs_f64();
        let bad = report.mismatches();
        total += bad;
        println!(
            "{:14} {:>7} {:>6} {:>8}",
            report.name,
            report.checks.len(),
            report.smoke.len(),
            if bad == 0 { "ok" } else { "MISMATCH" }
        );
        for c in report.checks.iter().filter(|c| !c.matched) {
            let want = if c.expected { CqStatus::Holds } else { CqStatus::Violated };
            println!("    {}: expected {want:?}, got {:?}", c.cq, c.got);
        }
        for s in report.smoke.iter().filter(|s| !s.passed) {
            println!("    {:?} solve: {:?} at {:?}", s.test.method, s.status, s.x);
        }
        if let Some(dir) = out {
            let mut lines = vec![RunLine::header("corpus", &pf.name, seed, &opts)];
            lines.extend(report.verdicts.iter().cloned().map(RunLine::Verdict));
            lines.push(RunLine::footer(
                if bad == 0 { "ok" } else { "mismatch" },
                wall,
                Some(serde_json::json!({ "checks": report.checks, "smoke": report.smoke })),
            ));
            io::write_run(&dir.join(format!("{}.jsonl", pf.name)), &lines)?;
        }
    }
    println!("{} fixtures, {total} mismatches", fixtures.len());
    Ok(if total == 0 { 0 } else { EXIT_MISMATCH })
}
