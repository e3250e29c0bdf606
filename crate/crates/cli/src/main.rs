mod json;

use std::fs;
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use tanfield::continuation::{seed_points, trace_branch};
use tanfield::dae::seed_map;
use tanfield::flow::{flow_map, StepControl};
use tanfield::manifold::{implicit_solve_y, ImplicitSolve};
use tanfield::registry::{self, problem_degree, Verdict};
use tanfield::{DegreeMethod, DomainBox, Error, ErrorKind, ProblemFile};

#[derive(Parser)]
#[command(
    name = "tanfield",
    version,
    about = "Degree of tangent fields on implicit manifolds, periodic branches of semi-explicit DAEs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    SignSum,
    Winding,
}

#[derive(Subcommand)]
enum Command {
    /// Degree of a problem through the reduction formula.
    Degree {
        /// Problem file or built-in name (see `list`).
        problem: String,
        /// Override the box: "lo hi, lo hi, ...".
        #[arg(long = "box", allow_hyphen_values = true)]
        domain: Option<String>,
        /// `winding` is available for planar problems only.
        #[arg(long, value_enum, default_value = "sign-sum")]
        method: Method,
        /// Also write the JSON record here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Trace a branch of periodic solution pairs from a seed zero.
    Trace {
        /// Problem file or built-in name.
        problem: String,
        /// Nominal arclength step; the problem's value if omitted.
        #[arg(long)]
        ds: Option<f64>,
        /// Stop once λ reaches this value.
        #[arg(long)]
        lambda_max: Option<f64>,
        /// Cap on continuation steps.
        #[arg(long)]
        max_steps: Option<usize>,
        /// RK4 steps per forcing period.
        #[arg(long)]
        steps_per_period: Option<usize>,
        /// Index of the seed zero, in the order zeros are reported.
        #[arg(long, default_value_t = 0)]
        seed: usize,
        /// CSV destination; standard output if omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Integrate from a point of M and write the dense output as CSV.
    Flow {
        /// Problem file or built-in name.
        problem: String,
        /// Initial x, comma separated; the built-in probe if omitted.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        x0: Option<Vec<f64>>,
        /// Starting guess for y, comma separated; zeros if omitted.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        y0: Option<Vec<f64>>,
        /// Forcing amplitude; the built-in probe or 0 if omitted.
        #[arg(long)]
        lambda: Option<f64>,
        /// End time; one period if omitted.
        #[arg(long)]
        t1: Option<f64>,
        /// RK4 steps per forcing period.
        #[arg(long)]
        steps_per_period: Option<usize>,
        /// Keep every n-th step in the output.
        #[arg(long, default_value_t = 16)]
        stride: usize,
        /// CSV destination; standard output if omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check every built-in example against its known degree.
    VerifyPaper {
        #[arg(long)]
        json: bool,
        /// Override an expected degree of (phi1, g), e.g. example-4-1=1.
        #[arg(long = "expect", value_name = "NAME=DEG")]
        expect: Vec<String>,
    },
    /// Print a problem in canonical form.
    Show { problem: String },
    /// List the built-in problems.
    List,
}

fn load(spec: &str) -> Result<ProblemFile> {
    if let Some(e) = registry::find(spec) {
        return Ok(e.problem());
    }
    let text = fs::read_to_string(spec).map_err(|e| Error::InvalidInput(format!("cannot read `{spec}`: {e}")))?;
    Ok(ProblemFile::parse(&text)?)
}

fn parse_box(text: &str) -> Result<DomainBox> {
    let mut bounds = Vec::new();
    for part in text.split(',') {
        let ends: Vec<f64> = part
            .split_whitespace()
            .map(|t| t.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::InvalidInput(format!("bad box entry `{}`", part.trim())))?;
        if ends.len() != 2 {
            return Err(Error::InvalidInput(format!("box entry `{}` needs `lo hi`", part.trim())).into());
        }
        bounds.push((ends[0], ends[1]));
    }
    Ok(DomainBox::from_bounds(&bounds)?)
}

fn emit(text: &str, out: Option<&PathBuf>) -> Result<()> {
    match out {
        Some(path) => fs::write(path, text).with_context(|| format!("writing {}", path.display())),
        None => {
            io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn degree(problem: &str, domain: Option<&str>, method: Method, out: Option<&PathBuf>) -> Result<()> {
    let p = load(problem)?;
    let region = domain.map(parse_box).transpose()?;
    let method = match method {
        Method::SignSum => DegreeMethod::SignSum,
        Method::Winding => DegreeMethod::Winding,
    };
    let d = problem_degree(&p, region.as_ref(), method)?;
    let region = match region {
        Some(r) => r,
        None => p.domain()?,
    };
    let zeros: Vec<Value> = d
        .reduced
        .zeros
        .iter()
        .map(|z| {
            json!({
                "location": z.location,
                "residual": z.residual,
                "determinant": z.determinant,
                "index": z.index,
            })
        })
        .collect();
    let record = json!({
        "problem": p.name,
        "method": d.reduced.method.as_str(),
        "box": region.lower().iter().zip(region.upper()).map(|(l, h)| vec![*l, *h]).collect::<Vec<_>>(),
        "degree": d.reduced.degree,
        "partial2_sign": d.partial2_sign,
        "manifold_degree": d.degree,
        "zeros": zeros,
        "boundary_min": d.reduced.boundary_min,
        "rounding_gap": d.reduced.rounding_gap,
        "warnings": d.reduced.warnings,
    });
    let text = json::to_canonical(&record);
    if let Some(path) = out {
        fs::write(path, &text).with_context(|| format!("writing {}", path.display()))?;
    }
    io::stdout().write_all(text.as_bytes())?;
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn trace(
    problem: &str,
    ds: Option<f64>,
    lambda_max: Option<f64>,
    max_steps: Option<usize>,
    steps_per_period: Option<usize>,
    seed: usize,
    out: Option<&PathBuf>,
) -> Result<()> {
    let p = load(problem)?;
    let dae = p.to_dae()?;
    let mut params = p.trace_params();
    if let Some(v) = ds {
        params.ds = v;
    }
    if let Some(v) = lambda_max {
        params.lambda_max = v;
    }
    if let Some(v) = max_steps {
        params.max_steps = v;
    }
    if let Some(v) = steps_per_period {
        params.steps_per_period = v;
    }
    let seeds = seed_points(&seed_map(&dae, p.quadrature_nodes())?, &p.domain()?, &p.degree_params())?;
    let root = seeds.get(seed).ok_or_else(|| {
        Error::InvalidInput(format!(
            "seed index {seed} out of range: {} seed zeros found",
            seeds.len()
        ))
    })?;
    let branch = trace_branch(&dae, root, &params)?;
    let mut csv = Vec::new();
    branch.write_csv(&mut csv)?;
    emit(std::str::from_utf8(&csv)?, out)?;
    eprintln!(
        "{} pairs, stopped: {}{}",
        branch.pairs.len(),
        branch.termination.as_str(),
        branch.detail.map(|d| format!(" ({d})")).unwrap_or_default()
    );
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn flow(
    problem: &str,
    x0: Option<Vec<f64>>,
    y0: Option<Vec<f64>>,
    lambda: Option<f64>,
    t1: Option<f64>,
    steps_per_period: Option<usize>,
    stride: usize,
    out: Option<&PathBuf>,
) -> Result<()> {
    let p = load(problem)?;
    let dae = p.to_dae()?;
    let probe = registry::find(problem).map(|e| e.probe);
    let x0 = x0
        .or_else(|| probe.as_ref().map(|q| q.x0.clone()))
        .ok_or_else(|| Error::InvalidInput("--x0 is required for problem files".into()))?;
    let y_guess = y0
        .or_else(|| probe.as_ref().map(|q| q.y_guess.clone()))
        .unwrap_or_else(|| vec![0.0; p.s]);
    let lambda = lambda.or(probe.map(|q| q.lambda)).unwrap_or(0.0);
    let opts = ImplicitSolve {
        enforce_domain: false,
        ..ImplicitSolve::default()
    };
    let y = implicit_solve_y(dae.constraint(), &x0, &y_guess, opts)?;
    let start: Vec<f64> = x0.iter().chain(&y).copied().collect();
    let period = dae.period();
    let steps = steps_per_period.unwrap_or(
        p.params
            .steps_per_period
            .unwrap_or(tanfield::flow::DEFAULT_STEPS_PER_PERIOD),
    );
    let control = StepControl::per_period(period, steps).with_samples(stride.max(1));
    let result = flow_map(&dae.flow_field(), &start, 0.0, t1.unwrap_or(period), lambda, &control)?;
    let mut csv = Vec::new();
    result.write_csv(p.k, &mut csv)?;
    emit(std::str::from_utf8(&csv)?, out)?;
    eprintln!("{} steps, max |g| = {:e}", result.steps, result.max_drift);
    Ok(())
}

fn verify_paper(as_json: bool, expect: &[String]) -> Result<ExitCode> {
    let mut examples = registry::examples();
    for item in expect {
        let (name, deg) = item
            .split_once('=')
            .ok_or_else(|| Error::InvalidInput(format!("expected NAME=DEG, got `{item}`")))?;
        let deg: i64 = deg
            .trim()
            .parse()
            .map_err(|_| Error::InvalidInput(format!("`{deg}` is not an integer")))?;
        let e = examples
            .iter_mut()
            .find(|e| e.name == name.trim())
            .ok_or_else(|| Error::InvalidInput(format!("unknown example `{name}`")))?;
        e.expected.reduced_degree = deg;
        e.expected.manifold_degree = i64::from(e.expected.partial2_sign) * deg;
    }
    let verdicts: Vec<Verdict> = examples.iter().map(registry::verify).collect();
    let passed = verdicts.iter().filter(|v| v.pass).count();
    if as_json {
        let list: Vec<Value> = verdicts
            .iter()
            .map(|v| {
                json!({
                    "name": v.name,
                    "pass": v.pass,
                    "expected": {
                        "degree": v.expected.reduced_degree,
                        "partial2_sign": v.expected.partial2_sign,
                        "manifold_degree": v.expected.manifold_degree,
                        "zeros": v.expected.zeros,
                    },
                    "degree": v.reduced_degree,
                    "partial2_sign": v.partial2_sign,
                    "manifold_degree": v.manifold_degree,
                    "zeros": v.zeros,
                    "error": v.error,
                })
            })
            .collect();
        print!("{}", json::to_canonical(&Value::Array(list)));
    } else {
        let fmt = |v: Option<i64>| v.map_or("-".to_string(), |d| format!("{d:+}"));
        println!(
            "{:<13} {:>7} {:>5} {:>7}   {:<16} result",
            "example", "deg(F)", "sign", "deg(M)", "expected"
        );
        for v in &verdicts {
            let e = &v.expected;
            println!(
                "{:<13} {:>7} {:>5} {:>7}   {:<16} {}",
                v.name,
                fmt(v.reduced_degree),
                fmt(v.partial2_sign.map(i64::from)),
                fmt(v.manifold_degree),
                format!("{:+} {:+} {:+}", e.reduced_degree, e.partial2_sign, e.manifold_degree),
                if v.pass { "pass" } else { "FAIL" }
            );
            if let Some(err) = &v.error {
                println!("    error: {err}");
            }
        }
        println!("{passed}/{} passed", verdicts.len());
    }
    Ok(if passed == verdicts.len() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Degree {
            problem,
            domain,
            method,
            out,
        } => degree(&problem, domain.as_deref(), method, out.as_ref())?,
        Command::Trace {
            problem,
            ds,
            lambda_max,
            max_steps,
            steps_per_period,
            seed,
            out,
        } => trace(
            &problem,
            ds,
            lambda_max,
            max_steps,
            steps_per_period,
            seed,
            out.as_ref(),
        )?,
        Command::Flow {
            problem,
            x0,
            y0,
            lambda,
            t1,
            steps_per_period,
            stride,
            out,
        } => flow(&problem, x0, y0, lambda, t1, steps_per_period, stride, out.as_ref())?,
        Command::VerifyPaper { json, expect } => return verify_paper(json, &expect),
        Command::Show { problem } => print!("{}", load(&problem)?),
        Command::List => {
            for e in registry::examples() {
                println!("{:<13} {}", e.name, e.title);
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>().map(Error::kind) {
        Some(ErrorKind::Parse) => 2,
        Some(ErrorKind::Regularity) => 3,
        Some(ErrorKind::Admissibility) => 4,
        Some(ErrorKind::Numeric) => 5,
        // I/O failures on output files
        None => 5,
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
