//! Built-in worked examples with their known degrees.

use rayon::prelude::*;

use crate::dae::{average_wind, SemiExplicitDae};
use crate::degree::{degree_winding_2d, DegreeMethod, DomainBox};
use crate::error::{Error, Result};
use crate::field::FieldHandle;
use crate::manifold::{manifold_degree, partial2_sign_report, reduced_map, ManifoldDegree};
use crate::problem::ProblemFile;

/// Known values for a built-in example.
#[derive(Debug, Clone, PartialEq)]
pub struct Expected {
    /// Brouwer degree of `(φ₁, g)` on the box.
    pub reduced_degree: i64,
    pub partial2_sign: i32,
    pub manifold_degree: i64,
    pub zeros: Vec<Vec<f64>>,
}

/// Starting point for a one-period flow check.
#[derive(Debug, Clone, PartialEq)]
pub struct Probe {
    pub x0: Vec<f64>,
    pub y_guess: Vec<f64>,
    pub lambda: f64,
}

#[derive(Debug, Clone)]
pub struct Example {
    pub name: &'static str,
    pub title: &'static str,
    pub source: &'static str,
    pub expected: Expected,
    pub probe: Probe,
}

impl Example {
    pub fn problem(&self) -> ProblemFile {
        ProblemFile::parse(self.source).expect("built-in problems parse")
    }
}

/// Zero locations must match the expected ones to this distance.
pub const ZERO_TOL: f64 = 1e-8;

const EXAMPLE_4_1: &str = "\
name = example-4-1
k = 1
s = 1
vars = x y
box = -2 2, -2 2

[g]
x^3 - y^3 - 3*y

[gamma]
x*(y^2 + 1)
";

const EXAMPLE_4_2: &str = "\
name = example-4-2
k = 2
s = 1
vars = x1 x2 y
box = -2 2, -2 2, -2 2

[g]
x1^2 - y

[gamma]
x1
1 + x2^3
";

const EXAMPLE_5_2: &str = "\
name = example-5-2
k = 1
s = 2
vars = x y1 y2
box = -3 3, -3 3, -3 3

[g]
exp(y1)*cos(y2) - x
exp(y1)*sin(y2) + x - 1

[gamma]
y2
";

const EXAMPLE_5_3: &str = "\
name = example-5-3
k = 1
s = 1
vars = x y
period = 2*pi
box = -2 2, -2 2

[g]
y^3 + y - x^2

[sigma]
x + y + sin(t)
";

const EXAMPLE_5_5: &str = "\
name = example-5-5
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
-alpha*x2 - y

[sigma]
0
cos(t)

[params]
ds = 0.02
lambda_max = 1
";

const EXAMPLE_5_7: &str = "\
name = example-5-7
k = 2
s = 2
vars = x1 x2 y1 y2
period = 2*pi
box = -3 3, -3 3, 0.2 3, -2 2

[g]
x1 - y1*cos(y2)
x2 - y1*sin(y2)

[sigma]
y2 + cos(t)
y1 - 2*cos(t)^2
";

pub fn examples() -> Vec<Example> {
    let expected = |reduced: i64, sign: i32, zero: &[f64]| Expected {
        reduced_degree: reduced,
        partial2_sign: sign,
        manifold_degree: i64::from(sign) * reduced,
        zeros: vec![zero.to_vec()],
    };
    let probe = |x0: &[f64], y: &[f64], lambda: f64| Probe {
        x0: x0.to_vec(),
        y_guess: y.to_vec(),
        lambda,
    };
    vec![
        Example {
            name: "example-4-1",
            title: "planar cubic curve, x(y^2+1)",
            source: EXAMPLE_4_1,
            expected: expected(-1, -1, &[0.0, 0.0]),
            probe: probe(&[1e-3], &[0.0], 0.0),
        },
        Example {
            name: "example-4-2",
            title: "parabolic cylinder in R^3",
            source: EXAMPLE_4_2,
            expected: expected(-1, -1, &[0.0, -1.0, 0.0]),
            probe: probe(&[1e-3, -1.0], &[0.0], 0.0),
        },
        Example {
            name: "example-5-2",
            title: "helix, not a graph over x",
            source: EXAMPLE_5_2,
            expected: expected(-1, 1, &[1.0, 0.0, 0.0]),
            probe: probe(&[1.3], &[0.3, -0.2], 0.0),
        },
        Example {
            name: "example-5-3",
            title: "cubic constraint, pure forcing",
            source: EXAMPLE_5_3,
            expected: expected(1, 1, &[0.0, 0.0]),
            probe: probe(&[0.0], &[0.0], 0.1),
        },
        Example {
            name: "example-5-5",
            title: "damped spring with implicit restoring force",
            source: EXAMPLE_5_5,
            expected: expected(1, 1, &[0.0, 0.0, 0.0]),
            probe: probe(&[0.1, 0.0], &[0.0], 1.0),
        },
        Example {
            name: "example-5-7",
            title: "polar chart, pure forcing",
            source: EXAMPLE_5_7,
            expected: expected(-1, 1, &[1.0, 0.0, 1.0, 0.0]),
            probe: probe(&[1.0, 0.0], &[1.0, 0.0], 0.1),
        },
    ]
}

pub fn find(name: &str) -> Option<Example> {
    examples().into_iter().find(|e| e.name == name)
}

/// First component of the field whose degree governs the problem: the
/// autonomous part `γ` when present, otherwise the period average `Σ`.
pub fn first_component(dae: &SemiExplicitDae, quadrature_nodes: usize) -> Result<FieldHandle> {
    match dae.gamma() {
        Some(g) => Ok(g.clone()),
        None => Ok(average_wind(dae, quadrature_nodes)?.sigma_mean),
    }
}

/// Reduction-formula degree of a problem on `region` (its own box if `None`).
pub fn problem_degree(
    problem: &ProblemFile,
    region: Option<&DomainBox>,
    method: DegreeMethod,
) -> Result<ManifoldDegree> {
    let dae = problem.to_dae()?;
    let phi1 = first_component(&dae, problem.quadrature_nodes())?;
    let region = match region {
        Some(r) => r.clone(),
        None => problem.domain()?,
    };
    if region.dim() != dae.constraint().dim() {
        return Err(Error::InvalidInput(format!(
            "box has dimension {}, expected {}",
            region.dim(),
            dae.constraint().dim()
        )));
    }
    let params = problem.degree_params();
    match method {
        DegreeMethod::SignSum => manifold_degree(&phi1, dae.constraint(), &region, &params),
        DegreeMethod::Winding => {
            let sign = partial2_sign_report(dae.constraint(), &region, 16)?;
            let f = reduced_map(&phi1, dae.constraint())?;
            let mut reduced = degree_winding_2d(&f, &region, params.boundary_samples_for(2))?;
            reduced.warnings.extend(sign.warnings);
            Ok(ManifoldDegree {
                degree: i64::from(sign.sign) * reduced.degree,
                partial2_sign: sign.sign,
                reduced,
            })
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Verdict {
    pub name: String,
    pub expected: Expected,
    pub reduced_degree: Option<i64>,
    pub partial2_sign: Option<i32>,
    pub manifold_degree: Option<i64>,
    pub zeros: Vec<Vec<f64>>,
    pub error: Option<String>,
    pub pass: bool,
}

pub fn verify(example: &Example) -> Verdict {
    verify_against(example.name, &example.problem(), &example.expected)
}

pub fn verify_against(name: &str, problem: &ProblemFile, expected: &Expected) -> Verdict {
    let mut v = Verdict {
        name: name.to_string(),
        expected: expected.clone(),
        reduced_degree: None,
        partial2_sign: None,
        manifold_degree: None,
        zeros: Vec::new(),
        error: None,
        pass: false,
    };
    match problem_degree(problem, None, DegreeMethod::SignSum) {
        Ok(d) => {
            v.reduced_degree = Some(d.reduced.degree);
            v.partial2_sign = Some(d.partial2_sign);
            v.manifold_degree = Some(d.degree);
            v.zeros = d.reduced.zeros.iter().map(|z| z.location.clone()).collect();
            let zeros_match = v.zeros.len() == expected.zeros.len()
                && v.zeros
                    .iter()
                    .zip(&expected.zeros)
                    .all(|(a, b)| a.len() == b.len() && a.iter().zip(b).all(|(p, q)| (p - q).abs() <= ZERO_TOL));
            v.pass = d.reduced.degree == expected.reduced_degree
                && d.partial2_sign == expected.partial2_sign
                && d.degree == expected.manifold_degree
                && zeros_match;
        }
        Err(e) => v.error = Some(e.to_string()),
    }
    v
}

pub fn verify_all() -> Vec<Verdict> {
    examples().par_iter().map(verify).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_examples_parse_and_build() {
        for e in examples() {
            let p = e.problem();
            assert_eq!(p.name, e.name);
            p.to_dae().unwrap();
            assert_eq!(e.probe.x0.len(), p.k);
            assert_eq!(e.probe.y_guess.len(), p.s);
        }
    }

    #[test]
    fn registry_verifies() {
        for v in verify_all() {
            assert!(v.pass, "{v:?}");
        }
    }

    #[test]
    fn flipped_expectation_fails() {
        let e = find("example-4-1").unwrap();
        let mut expected = e.expected.clone();
        expected.reduced_degree = 1;
        assert!(!verify_against(e.name, &e.problem(), &expected).pass);
    }
}
