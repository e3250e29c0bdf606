//! Plain-text problem files.
//!
//! ```text
//! # damped spring with a stiff implicit restoring force
//! name = spring
//! k = 2
//! s = 1
//! vars = x1 x2 y
//! period = 2*pi
//! box = -2 2, -2 2, -2 2
//!
//! [constants]
//! alpha = 0.5
//!
//! [g]
//! y^3 + y - x1^5 - x1
//!
//! [gamma]
//! x2
//! -alpha*x2 - y
//!
//! [sigma]
//! 0
//! cos(t)
//!
//! [params]
//! ds = 0.02
//! ```
//!
//! Header lines are `key = value`; sections hold one expression per line
//! (`[constants]` and `[params]` hold `key = value` pairs). `#` starts a
//! comment. `gamma` and `sigma` may use the time variable `t`; `g` may not.
//! Scalar values (period, box bounds, constants) are expressions without
//! variables, so `2*pi` is accepted.

use std::collections::BTreeMap;
use std::f64::consts::TAU;
use std::fmt;
use std::sync::Arc;

use crate::continuation::TraceParams;
use crate::dae::{SemiExplicitDae, DEFAULT_QUADRATURE_NODES};
use crate::degree::{DegreeParams, DomainBox};
use crate::error::{Error, Result};
use crate::expr::Expression;
use crate::field::FieldHandle;
use crate::manifold::ImplicitConstraint;

/// Period used for autonomous problems, which only need one to define a
/// flow horizon.
pub const DEFAULT_PERIOD: f64 = TAU;

const TIME_VAR: &str = "t";

#[derive(Debug, Clone, PartialEq)]
pub struct ProblemFile {
    pub name: String,
    pub k: usize,
    pub s: usize,
    pub vars: Vec<String>,
    /// Source and value.
    pub period: Option<(String, f64)>,
    /// Source pairs per axis, in variable order.
    pub bounds: Vec<(String, String)>,
    /// Name, source, value.
    pub constants: Vec<(String, String, f64)>,
    pub g: Vec<String>,
    pub gamma: Option<Vec<String>>,
    pub sigma: Option<Vec<String>>,
    pub params: ProblemParams,
}

/// Solver overrides from the `[params]` section.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ProblemParams {
    pub grid_density: Option<usize>,
    pub boundary_samples: Option<usize>,
    pub newton_tol: Option<f64>,
    pub quadrature_nodes: Option<usize>,
    pub steps_per_period: Option<usize>,
    pub ds: Option<f64>,
    pub lambda_max: Option<f64>,
    pub max_steps: Option<usize>,
}

impl ProblemParams {
    const KEYS: [&'static str; 8] = [
        "grid_density",
        "boundary_samples",
        "newton_tol",
        "quadrature_nodes",
        "steps_per_period",
        "ds",
        "lambda_max",
        "max_steps",
    ];

    fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        fn int(v: &str) -> std::result::Result<Option<usize>, String> {
            v.parse()
                .map(Some)
                .map_err(|_| format!("`{v}` is not a non-negative integer"))
        }
        fn real(v: &str) -> std::result::Result<Option<f64>, String> {
            match v.parse::<f64>() {
                Ok(x) if x.is_finite() => Ok(Some(x)),
                _ => Err(format!("`{v}` is not a finite number")),
            }
        }
        match key {
            "grid_density" => self.grid_density = int(value)?,
            "boundary_samples" => self.boundary_samples = int(value)?,
            "newton_tol" => self.newton_tol = real(value)?,
            "quadrature_nodes" => self.quadrature_nodes = int(value)?,
            "steps_per_period" => self.steps_per_period = int(value)?,
            "ds" => self.ds = real(value)?,
            "lambda_max" => self.lambda_max = real(value)?,
            "max_steps" => self.max_steps = int(value)?,
            _ => {
                return Err(format!(
                    "unknown parameter `{key}`; expected one of {}",
                    Self::KEYS.join(", ")
                ))
            }
        }
        Ok(())
    }

    fn entries(&self) -> Vec<(&'static str, String)> {
        let mut out = Vec::new();
        let mut push = |k: &'static str, v: Option<String>| {
            if let Some(v) = v {
                out.push((k, v));
            }
        };
        push("grid_density", self.grid_density.map(|v| v.to_string()));
        push("boundary_samples", self.boundary_samples.map(|v| v.to_string()));
        push("newton_tol", self.newton_tol.map(|v| format!("{v:e}")));
        push("quadrature_nodes", self.quadrature_nodes.map(|v| v.to_string()));
        push("steps_per_period", self.steps_per_period.map(|v| v.to_string()));
        push("ds", self.ds.map(|v| v.to_string()));
        push("lambda_max", self.lambda_max.map(|v| v.to_string()));
        push("max_steps", self.max_steps.map(|v| v.to_string()));
        out
    }
}

#[derive(Clone, Copy, PartialEq)]
enum Section {
    Header,
    Constants,
    G,
    Gamma,
    Sigma,
    Params,
}

fn problem_err(line: usize, message: impl Into<String>) -> Error {
    Error::Problem {
        line,
        message: message.into(),
    }
}

/// Value of a variable-free expression.
fn scalar(source: &str, constants: &[(String, f64)]) -> std::result::Result<f64, String> {
    // a name nobody can type keeps the parser's "at least one variable" rule
    let expr = Expression::parse_with_constants(source, &["\u{0}"], constants).map_err(|e| e.to_string())?;
    let v = expr.eval_slice(&[0.0]).map_err(|e| e.to_string())?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format!("`{source}` is not finite"))
    }
}

impl ProblemFile {
    pub fn parse(text: &str) -> Result<Self> {
        let mut header: BTreeMap<String, (usize, String)> = BTreeMap::new();
        let mut constants: Vec<(String, String, f64)> = Vec::new();
        let mut exprs: [Vec<(usize, String)>; 3] = Default::default();
        let mut seen = [false; 3];
        let mut params = ProblemParams::default();
        let mut section = Section::Header;
        let mut sections_seen: Vec<&str> = Vec::new();

        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            if let Some(name) = content.strip_prefix('[').and_then(|r| r.strip_suffix(']')) {
                let name = name.trim();
                section = match name {
                    "constants" => Section::Constants,
                    "g" => Section::G,
                    "gamma" => Section::Gamma,
                    "sigma" => Section::Sigma,
                    "params" => Section::Params,
                    _ => return Err(problem_err(line, format!("unknown section [{name}]"))),
                };
                if sections_seen.contains(&name) {
                    return Err(problem_err(line, format!("section [{name}] appears twice")));
                }
                sections_seen.push(match section {
                    Section::Constants => "constants",
                    Section::G => "g",
                    Section::Gamma => "gamma",
                    Section::Sigma => "sigma",
                    _ => "params",
                });
                if let Some(slot) = expr_slot(section) {
                    seen[slot] = true;
                }
                continue;
            }
            match section {
                Section::Header | Section::Constants | Section::Params => {
                    let (key, value) = content
                        .split_once('=')
                        .map(|(k, v)| (k.trim(), v.trim()))
                        .ok_or_else(|| problem_err(line, "expected `key = value`"))?;
                    if key.is_empty() || value.is_empty() {
                        return Err(problem_err(line, "expected `key = value`"));
                    }
                    match section {
                        Section::Header => {
                            if header.insert(key.to_string(), (line, value.to_string())).is_some() {
                                return Err(problem_err(line, format!("duplicate key `{key}`")));
                            }
                        }
                        Section::Constants => {
                            if !is_identifier(key) {
                                return Err(problem_err(line, format!("`{key}` is not a valid name")));
                            }
                            if constants.iter().any(|c| c.0 == key) {
                                return Err(problem_err(line, format!("duplicate constant `{key}`")));
                            }
                            let known: Vec<(String, f64)> = constants.iter().map(|c| (c.0.clone(), c.2)).collect();
                            let v = scalar(value, &known).map_err(|m| problem_err(line, m))?;
                            constants.push((key.to_string(), value.to_string(), v));
                        }
                        _ => params.set(key, value).map_err(|m| problem_err(line, m))?,
                    }
                }
                _ => exprs[expr_slot(section).expect("expression section")].push((line, content.to_string())),
            }
        }

        let take = |key: &str| header.get(key).cloned();
        let require = |key: &str| take(key).ok_or_else(|| problem_err(0, format!("missing header key `{key}`")));
        for (key, (line, _)) in &header {
            if !["name", "k", "s", "vars", "period", "box"].contains(&key.as_str()) {
                return Err(problem_err(*line, format!("unknown header key `{key}`")));
            }
        }
        let (_, name) = require("name")?;
        let dim = |key: &str| -> Result<usize> {
            let (line, v) = require(key)?;
            v.parse::<usize>()
                .ok()
                .filter(|d| *d > 0)
                .ok_or_else(|| problem_err(line, format!("`{key}` must be a positive integer")))
        };
        let k = dim("k")?;
        let s = dim("s")?;
        let (vars_line, vars_src) = require("vars")?;
        let vars: Vec<String> = vars_src.split_whitespace().map(String::from).collect();
        if vars.len() != k + s {
            return Err(problem_err(
                vars_line,
                format!("expected {} variable names, got {}", k + s, vars.len()),
            ));
        }
        for (i, v) in vars.iter().enumerate() {
            if !is_identifier(v) || v == TIME_VAR || v == "pi" {
                return Err(problem_err(
                    vars_line,
                    format!("`{v}` cannot be used as a variable name"),
                ));
            }
            if vars[..i].contains(v) || constants.iter().any(|c| &c.0 == v) {
                return Err(problem_err(vars_line, format!("`{v}` is declared twice")));
            }
        }
        let const_values: Vec<(String, f64)> = constants.iter().map(|c| (c.0.clone(), c.2)).collect();

        let period = match take("period") {
            None => None,
            Some((line, src)) => {
                let v = scalar(&src, &const_values).map_err(|m| problem_err(line, m))?;
                if v <= 0.0 {
                    return Err(problem_err(line, "period must be positive"));
                }
                Some((src, v))
            }
        };
        let (box_line, box_src) = require("box")?;
        let mut bounds = Vec::new();
        for part in box_src.split(',') {
            let ends: Vec<&str> = part.split_whitespace().collect();
            if ends.len() != 2 {
                return Err(problem_err(
                    box_line,
                    format!("box entry `{}` needs `lo hi`", part.trim()),
                ));
            }
            let lo = scalar(ends[0], &const_values).map_err(|m| problem_err(box_line, m))?;
            let hi = scalar(ends[1], &const_values).map_err(|m| problem_err(box_line, m))?;
            if !(lo < hi) {
                return Err(problem_err(box_line, format!("empty interval [{lo}, {hi}]")));
            }
            bounds.push((ends[0].to_string(), ends[1].to_string()));
        }
        if bounds.len() != k + s {
            return Err(problem_err(
                box_line,
                format!("box has {} intervals, expected {}", bounds.len(), k + s),
            ));
        }

        let [g_lines, gamma_lines, sigma_lines] = exprs;
        let check = |lines: &[(usize, String)], label: &str, want: usize, time: bool, present: bool| -> Result<()> {
            if present && lines.len() != want {
                let line = lines.last().map_or(0, |l| l.0);
                return Err(problem_err(
                    line,
                    format!("[{label}] needs {want} expressions, got {}", lines.len()),
                ));
            }
            let mut names = vars.clone();
            if time {
                names.push(TIME_VAR.to_string());
            }
            for (line, src) in lines {
                Expression::parse_with_constants(src, &names, &const_values)
                    .map_err(|e| problem_err(*line, format!("[{label}] {e}")))?;
            }
            Ok(())
        };
        if !seen[0] {
            return Err(problem_err(0, "missing [g] section"));
        }
        check(&g_lines, "g", s, false, true)?;
        check(&gamma_lines, "gamma", k, true, seen[1])?;
        check(&sigma_lines, "sigma", k, true, seen[2])?;
        if seen[2] && period.is_none() {
            return Err(problem_err(0, "a period is required when [sigma] is present"));
        }
        let strip = |v: Vec<(usize, String)>| v.into_iter().map(|(_, s)| s).collect::<Vec<_>>();
        Ok(Self {
            name,
            k,
            s,
            vars,
            period,
            bounds,
            constants,
            g: strip(g_lines),
            gamma: seen[1].then(|| strip(gamma_lines)),
            sigma: seen[2].then(|| strip(sigma_lines)),
            params,
        })
    }

    pub fn period_value(&self) -> f64 {
        self.period.as_ref().map_or(DEFAULT_PERIOD, |p| p.1)
    }

    fn constant_values(&self) -> Vec<(String, f64)> {
        self.constants.iter().map(|c| (c.0.clone(), c.2)).collect()
    }

    pub fn domain(&self) -> Result<DomainBox> {
        let consts = self.constant_values();
        let mut bounds = Vec::with_capacity(self.bounds.len());
        for (lo, hi) in &self.bounds {
            let lo = scalar(lo, &consts).map_err(Error::InvalidInput)?;
            let hi = scalar(hi, &consts).map_err(Error::InvalidInput)?;
            bounds.push((lo, hi));
        }
        DomainBox::from_bounds(&bounds)
    }

    pub fn constraint(&self) -> Result<ImplicitConstraint> {
        let g = FieldHandle::from_expressions(&self.g, &self.vars, None, &self.constant_values())?;
        ImplicitConstraint::new(self.k, self.s, g, self.domain()?)
    }

    fn time_field(&self, sources: &[String]) -> Result<FieldHandle> {
        Ok(FieldHandle::from_expressions(
            sources,
            &self.vars,
            Some(TIME_VAR),
            &self.constant_values(),
        )?)
    }

    pub fn to_dae(&self) -> Result<SemiExplicitDae> {
        let constraint = Arc::new(self.constraint()?);
        let gamma = self.gamma.as_deref().map(|s| self.time_field(s)).transpose()?;
        let sigma = self.sigma.as_deref().map(|s| self.time_field(s)).transpose()?;
        SemiExplicitDae::new(constraint, gamma, sigma, self.period_value())
    }

    pub fn degree_params(&self) -> DegreeParams {
        let mut p = DegreeParams::default();
        if let Some(v) = self.params.grid_density {
            p.grid_density = Some(v);
        }
        if let Some(v) = self.params.boundary_samples {
            p.boundary_samples = Some(v);
        }
        if let Some(v) = self.params.newton_tol {
            p.newton_tol = v;
        }
        p
    }

    pub fn quadrature_nodes(&self) -> usize {
        self.params.quadrature_nodes.unwrap_or(DEFAULT_QUADRATURE_NODES)
    }

    pub fn trace_params(&self) -> TraceParams {
        let mut p = TraceParams::default();
        if let Some(v) = self.params.ds {
            p.ds = v;
        }
        if let Some(v) = self.params.lambda_max {
            p.lambda_max = v;
        }
        if let Some(v) = self.params.max_steps {
            p.max_steps = v;
        }
        if let Some(v) = self.params.steps_per_period {
            p.steps_per_period = v;
        }
        p
    }
}

fn expr_slot(section: Section) -> Option<usize> {
    match section {
        Section::G => Some(0),
        Section::Gamma => Some(1),
        Section::Sigma => Some(2),
        _ => None,
    }
}

fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

impl fmt::Display for ProblemFile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "name = {}", self.name)?;
        writeln!(f, "k = {}", self.k)?;
        writeln!(f, "s = {}", self.s)?;
        writeln!(f, "vars = {}", self.vars.join(" "))?;
        if let Some((src, _)) = &self.period {
            writeln!(f, "period = {src}")?;
        }
        let bounds: Vec<String> = self.bounds.iter().map(|(l, h)| format!("{l} {h}")).collect();
        writeln!(f, "box = {}", bounds.join(", "))?;
        if !self.constants.is_empty() {
            writeln!(f, "\n[constants]")?;
            for (name, src, _) in &self.constants {
                writeln!(f, "{name} = {src}")?;
            }
        }
        let mut block = |label: &str, lines: &[String]| -> fmt::Result {
            writeln!(f, "\n[{label}]")?;
            lines.iter().try_for_each(|l| writeln!(f, "{l}"))
        };
        block("g", &self.g)?;
        if let Some(v) = &self.gamma {
            block("gamma", v)?;
        }
        if let Some(v) = &self.sigma {
            block("sigma", v)?;
        }
        let params = self.params.entries();
        if !params.is_empty() {
            writeln!(f, "\n[params]")?;
            for (k, v) in params {
                writeln!(f, "{k} = {v}")?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SPRING: &str = "\
# damped spring
name = spring
k = 2
s = 1
vars = x1 x2 y
period = 2*pi
box = -2 2, -2 2, -2 2

[constants]
alpha = 0.5

[g]
y^3 + y - x1^5 - x1

[gamma]
x2
-alpha*x2 - y   # friction

[sigma]
0
cos(t)

[params]
ds = 0.02
lambda_max = 1
";

    #[test]
    fn parses_spring() {
        let p = ProblemFile::parse(SPRING).unwrap();
        assert_eq!((p.k, p.s), (2, 1));
        assert_eq!(p.vars, ["x1", "x2", "y"]);
        assert!((p.period_value() - TAU).abs() < 1e-15);
        assert_eq!(p.gamma.as_ref().unwrap()[1], "-alpha*x2 - y");
        assert_eq!(p.params.ds, Some(0.02));
        let dae = p.to_dae().unwrap();
        assert_eq!(dae.constraint().dim(), 3);
        let v = dae.gamma().unwrap().eval(0.0, &[0.0, 1.0, 2.0]).unwrap();
        assert_eq!(v, vec![1.0, -2.5]);
    }

    #[test]
    fn round_trip() {
        let p = ProblemFile::parse(SPRING).unwrap();
        let text = p.to_string();
        let q = ProblemFile::parse(&text).unwrap();
        assert_eq!(p, q);
        assert_eq!(text, q.to_string());
    }

    #[test]
    fn expression_errors_carry_line_and_offset() {
        let bad = SPRING.replace("y^3 + y - x1^5 - x1", "x1 + * y");
        match ProblemFile::parse(&bad).unwrap_err() {
            Error::Problem { line, message } => {
                assert_eq!(line, 13);
                assert!(message.contains("offset 5"), "{message}");
            }
            e => panic!("unexpected {e:?}"),
        }
    }

    #[test]
    fn validation() {
        let cases = [
            SPRING.replace("k = 2", "k = 3"),
            SPRING.replace("box = -2 2, -2 2, -2 2", "box = -2 2, -2 2"),
            SPRING.replace("x2\n-alpha", "-alpha"),
            SPRING.replace("period = 2*pi\n", ""),
            SPRING.replace("[params]", "[plot]"),
            SPRING.replace("ds = 0.02", "step = 0.02"),
            SPRING.replace("y^3 + y - x1^5 - x1", "y - cos(t)"),
            SPRING.replace("vars = x1 x2 y", "vars = x1 x1 y"),
            SPRING.replace("box = -2 2,", "box = 2 -2,"),
        ];
        for (i, text) in cases.iter().enumerate() {
            let err = ProblemFile::parse(text).unwrap_err();
            assert!(matches!(err, Error::Problem { .. }), "case {i}: {err:?}");
        }
    }

    #[test]
    fn autonomous_problem_gets_default_period() {
        let text = "name = line\nk = 1\ns = 1\nvars = x y\nbox = -1 1, -1 1\n[g]\ny - x\n[gamma]\n-x\n";
        let p = ProblemFile::parse(text).unwrap();
        assert!(p.sigma.is_none());
        assert_eq!(p.period_value(), DEFAULT_PERIOD);
        p.to_dae().unwrap();
    }
}
