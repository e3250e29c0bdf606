use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};

use tanfield::continuation::Shooter;
use tanfield::expr::Expression;
use tanfield::flow::{period_map, StepControl, DEFAULT_STEPS_PER_PERIOD};
use tanfield::registry::{self, find};
use tanfield::DegreeMethod;

fn degree(c: &mut Criterion) {
    let mut group = c.benchmark_group("degree");
    group.sample_size(20);
    for name in ["example-5-2", "example-5-7"] {
        let problem = find(name).unwrap().problem();
        group.bench_function(name, |b| {
            b.iter(|| registry::problem_degree(black_box(&problem), None, DegreeMethod::SignSum).unwrap())
        });
    }
    let planar = find("example-5-3").unwrap().problem();
    group.bench_function("example-5-3/winding", |b| {
        b.iter(|| registry::problem_degree(black_box(&planar), None, DegreeMethod::Winding).unwrap())
    });
    group.finish();
}

fn flow(c: &mut Criterion) {
    let example = find("example-5-5").unwrap();
    let dae = example.problem().to_dae().unwrap();
    let field = dae.flow_field();
    let shooter = Shooter::new(&dae).unwrap();
    let probe = &example.probe;
    let xi0 = shooter.lift(&probe.x0, &probe.y_guess).unwrap();
    let control = StepControl::per_period(dae.period(), DEFAULT_STEPS_PER_PERIOD);

    let mut group = c.benchmark_group("flow");
    group.sample_size(20);
    group.bench_function("spring/period-map", |b| {
        b.iter(|| period_map(&field, black_box(&xi0), probe.lambda, dae.period(), &control).unwrap())
    });
    group.bench_function("spring/residual", |b| {
        b.iter(|| {
            shooter
                .residual(black_box(&probe.x0), &probe.y_guess, probe.lambda)
                .unwrap()
        })
    });
    group.finish();
}

fn gradient(c: &mut Criterion) {
    let vars = ["x1", "x2", "y1"];
    let e = Expression::parse("y1^3 + x1^2*y1 - sin(x2)*exp(-x1) + x1*x2/(1 + y1^2)", &vars).unwrap();
    let p = [0.3, -0.7, 1.1];
    c.bench_function("expr/eval", |b| b.iter(|| e.eval_slice(black_box(&p)).unwrap()));
    c.bench_function("expr/gradient", |b| {
        let mut grad = [0.0; 3];
        b.iter(|| e.value_and_gradient(black_box(&p), &mut grad).unwrap())
    });
}

criterion_group!(kernels, degree, flow, gradient);
criterion_main!(kernels);
