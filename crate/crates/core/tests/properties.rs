use std::f64::consts::TAU;
use std::sync::Arc;

use nalgebra::Complex;
use proptest::prelude::*;

use tanfield::dae::{average_wind, SemiExplicitDae};
use tanfield::degree::degree_sign_sum;
use tanfield::expr::{BinaryOp, Expression, Func, Node, Scalar};
use tanfield::{DegreeParams, DomainBox, ErrorKind, FieldHandle, ImplicitConstraint};

const VARS: [&str; 3] = ["x", "y", "z"];

fn leaf() -> impl Strategy<Value = Node> {
    prop_oneof![
        (0u32..1000).prop_map(|n| Node::Const(f64::from(n) / 8.0)),
        (0usize..3).prop_map(Node::Var),
    ]
}

fn ast(funcs: &'static [Func], max_exp: i32) -> impl Strategy<Value = Node> {
    leaf().prop_recursive(5, 48, 2, move |inner| {
        let op = prop_oneof![
            Just(BinaryOp::Add),
            Just(BinaryOp::Sub),
            Just(BinaryOp::Mul),
            Just(BinaryOp::Div),
        ];
        prop_oneof![
            inner.clone().prop_map(|a| Node::Neg(Box::new(a))),
            (op, inner.clone(), inner.clone()).prop_map(|(o, a, b)| Node::Binary(o, Box::new(a), Box::new(b))),
            (inner.clone(), -2..=max_exp).prop_map(|(a, e)| Node::Pow(Box::new(a), e)),
            (proptest::sample::select(funcs), inner).prop_map(|(f, a)| Node::Call(f, Box::new(a))),
        ]
    })
}

fn point() -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec(-1.5..1.5f64, 3)
}

/// Complex-step oracle: `f'(x) = Im f(x + ih) / h` with no subtractive
/// cancellation, so it stays exact where difference quotients lose digits.
#[derive(Clone, Copy)]
struct Cs(Complex<f64>);

const CS_STEP: f64 = 1e-100;

impl std::ops::Add for Cs {
    type Output = Cs;
    fn add(self, o: Cs) -> Cs {
        Cs(self.0 + o.0)
    }
}

impl std::ops::Sub for Cs {
    type Output = Cs;
    fn sub(self, o: Cs) -> Cs {
        Cs(self.0 - o.0)
    }
}

impl std::ops::Mul for Cs {
    type Output = Cs;
    fn mul(self, o: Cs) -> Cs {
        Cs(self.0 * o.0)
    }
}

impl std::ops::Div for Cs {
    type Output = Cs;
    fn div(self, o: Cs) -> Cs {
        // first order in the imaginary part; avoids the |o|² of the full quotient
        let (a, b) = (self.0, o.0);
        Cs(Complex::new(a.re / b.re, (a.im * b.re - a.re * b.im) / (b.re * b.re)))
    }
}

impl std::ops::Neg for Cs {
    type Output = Cs;
    fn neg(self) -> Cs {
        Cs(-self.0)
    }
}

impl Scalar for Cs {
    fn constant(value: f64) -> Self {
        Cs(Complex::new(value, 0.0))
    }
    fn value(self) -> f64 {
        self.0.re
    }
    fn sin(self) -> Self {
        Cs(self.0.sin())
    }
    fn cos(self) -> Self {
        Cs(self.0.cos())
    }
    fn exp(self) -> Self {
        Cs(self.0.exp())
    }
    fn ln(self) -> Self {
        Cs(self.0.ln())
    }
    fn sqrt(self) -> Self {
        Cs(self.0.sqrt())
    }
    fn abs(self) -> Self {
        Cs(self.0 * self.0.re.signum())
    }
    fn powi(self, n: i32) -> Self {
        Cs(self.0.powi(n))
    }
}

/// Forward mode on absolute values: `eps` bounds the sum of the magnitudes
/// of all chain-rule terms, the scale that rounding error in a derivative is
/// relative to when terms cancel.
#[derive(Clone, Copy)]
struct Mag {
    re: f64,
    eps: f64,
}

impl std::ops::Add for Mag {
    type Output = Mag;
    fn add(self, o: Mag) -> Mag {
        Mag {
            re: self.re + o.re,
            eps: self.eps + o.eps,
        }
    }
}

impl std::ops::Sub for Mag {
    type Output = Mag;
    fn sub(self, o: Mag) -> Mag {
        Mag {
            re: self.re - o.re,
            eps: self.eps + o.eps,
        }
    }
}

impl std::ops::Mul for Mag {
    type Output = Mag;
    fn mul(self, o: Mag) -> Mag {
        Mag {
            re: self.re * o.re,
            eps: self.eps * o.re.abs() + self.re.abs() * o.eps,
        }
    }
}

impl std::ops::Div for Mag {
    type Output = Mag;
    fn div(self, o: Mag) -> Mag {
        Mag {
            re: self.re / o.re,
            eps: self.eps / o.re.abs() + self.re.abs() * o.eps / (o.re * o.re),
        }
    }
}

impl std::ops::Neg for Mag {
    type Output = Mag;
    fn neg(self) -> Mag {
        Mag {
            re: -self.re,
            eps: self.eps,
        }
    }
}

impl Scalar for Mag {
    fn constant(value: f64) -> Self {
        Mag { re: value, eps: 0.0 }
    }
    fn value(self) -> f64 {
        self.re
    }
    fn sin(self) -> Self {
        Mag {
            re: self.re.sin(),
            eps: self.eps * self.re.cos().abs(),
        }
    }
    fn cos(self) -> Self {
        Mag {
            re: self.re.cos(),
            eps: self.eps * self.re.sin().abs(),
        }
    }
    fn exp(self) -> Self {
        Mag {
            re: self.re.exp(),
            eps: self.eps * self.re.exp(),
        }
    }
    fn ln(self) -> Self {
        Mag {
            re: self.re.ln(),
            eps: self.eps / self.re.abs(),
        }
    }
    fn sqrt(self) -> Self {
        Mag {
            re: self.re.sqrt(),
            eps: self.eps / (2.0 * self.re.sqrt()),
        }
    }
    fn abs(self) -> Self {
        Mag {
            re: self.re.abs(),
            eps: self.eps,
        }
    }
    fn powi(self, n: i32) -> Self {
        // x^0 is constant; skip the 0·∞ of the general rule at x = 0
        let eps = if n == 0 {
            0.0
        } else {
            self.eps * f64::from(n.abs()) * self.re.abs().powi(n - 1)
        };
        Mag {
            re: self.re.powi(n),
            eps,
        }
    }
}

fn derivative_scale(root: &Node, p: &[f64], i: usize) -> f64 {
    root.eval_with(&|j| Mag {
        re: p[j],
        eps: if j == i { 1.0 } else { 0.0 },
    })
    .map_or(f64::INFINITY, |m| m.eps)
}

fn complex_step(root: &Node, p: &[f64], i: usize) -> f64 {
    let r = root
        .eval_with(&|j| Cs(Complex::new(p[j], if j == i { CS_STEP } else { 0.0 })))
        .unwrap();
    r.0.im / CS_STEP
}

proptest! {
    #[test]
    fn print_parse_round_trip(node in ast(&Func::ALL, 5)) {
        let e = Expression::from_node(node, &VARS);
        let text = e.to_string();
        let back = Expression::parse(&text, &VARS).unwrap();
        prop_assert_eq!(back.root(), e.root(), "{}", text);
        prop_assert_eq!(back.to_string(), text);
    }

    #[test]
    fn dual_gradient_matches_complex_step(node in ast(&[Func::Sin, Func::Cos, Func::Exp], 4), p in point()) {
        let e = Expression::from_node(node, &VARS);
        let v = e.eval_slice(&p);
        prop_assume!(v.is_ok());
        let mut grad = [0.0; 3];
        let value = e.value_and_gradient(&p, &mut grad).unwrap();
        prop_assert_eq!(value.to_bits(), v.unwrap().to_bits());
        for i in 0..3 {
            let cs = complex_step(e.root(), &p, i);
            let scale = derivative_scale(e.root(), &p, i);
            prop_assert!(
                (cs - grad[i]).abs() <= 1e-9 * (1.0 + scale),
                "d/d{}: dual {} vs complex step {}", VARS[i], grad[i], cs
            );
        }
    }

    #[test]
    fn evaluation_is_pure(node in ast(&Func::ALL, 5), p in point()) {
        let e = Expression::from_node(node, &VARS);
        let first = e.eval_slice(&p).map(f64::to_bits);
        let shared = Arc::new(e);
        let handles: Vec<_> = (0..4)
            .map(|_| {
                let e = shared.clone();
                let p = p.clone();
                std::thread::spawn(move || e.eval_slice(&p).map(f64::to_bits))
            })
            .collect();
        for h in handles {
            prop_assert_eq!(h.join().unwrap(), first.clone());
        }
    }

    #[test]
    fn averaging_is_exact_for_trig_polynomials(
        a in -2.0..2.0f64,
        b in -2.0..2.0f64,
        c in -2.0..2.0f64,
        n in 1u32..20,
        m in 1u32..20,
        x in -1.0..1.0f64,
    ) {
        let sigma = format!("{a} + {b}*sin({n}*t) + {c}*cos({m}*t)*x");
        let g = FieldHandle::from_expressions(&["y - x"], &["x", "y"], None, &[]).unwrap();
        let constraint = Arc::new(ImplicitConstraint::new(1, 1, g, DomainBox::symmetric(2, 2.0).unwrap()).unwrap());
        let s = FieldHandle::from_expressions(&[sigma.as_str()], &["x", "y"], Some("t"), &[]).unwrap();
        let dae = SemiExplicitDae::new(constraint, None, Some(s), TAU).unwrap();
        let mean = average_wind(&dae, 64).unwrap().sigma_mean.eval(0.0, &[x, x]).unwrap()[0];
        prop_assert!((mean - a).abs() <= 1e-12, "{} averages to {}", sigma, mean);
    }

    #[test]
    fn affine_degree_is_sign_of_determinant(
        entries in proptest::collection::vec(-1.0..1.0f64, 9),
        shift in proptest::collection::vec(-0.5..0.5f64, 3),
    ) {
        let a = nalgebra::Matrix3::from_row_slice(&entries);
        let det = a.determinant();
        prop_assume!(det.abs() > 1e-2);
        let f = FieldHandle::from_fn(3, 3, move |x, o| {
            for i in 0..3 {
                o[i] = (0..3).map(|j| entries[3 * i + j] * (x[j] - shift[j])).sum();
            }
        });
        let d = degree_sign_sum(&f, &DomainBox::symmetric(3, 1.0).unwrap(), &DegreeParams::default());
        // the box may be too small for a nearly singular map to clear the
        // admissibility threshold; then there is nothing to compare
        match d {
            Ok(d) => prop_assert_eq!(d.degree, det.signum() as i64),
            Err(e) => prop_assert_eq!(e.kind(), ErrorKind::Admissibility),
        }
    }
}
