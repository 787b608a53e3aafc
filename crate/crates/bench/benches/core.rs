use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use flowforge::codec::parse_action;
use flowforge::exec::{execute, ExecLimits};
use flowforge::expr::{eval, parse, Store};
use flowforge::tools::full_registry;
use flowforge::whitebox::{behavioral_equivalent, canonicalize};
use flowforge::{validate, Value};
use flowforge_bench::{desk, golden, ACTION_REPLIES, CONDITIONS};

fn executor(c: &mut Criterion) {
    let desk = desk();
    let tools = full_registry();
    c.bench_function("execute_desk_tests", |b| {
        b.iter(|| {
            for inst in &desk {
                for t in &inst.tests {
                    let _ = black_box(execute(golden(inst), &tools, &t.input, ExecLimits::default()));
                }
            }
        })
    });
}

fn expressions(c: &mut Criterion) {
    c.bench_function("expr_parse", |b| {
        b.iter(|| {
            for src in CONDITIONS {
                let _ = black_box(parse(black_box(src)));
            }
        })
    });
    let parsed: Vec<_> = CONDITIONS.iter().map(|s| parse(s).expect("parses")).collect();
    let store: Store = [
        ("x", Value::Number(5.0)),
        ("a", Value::Number(2.0)),
        ("b", Value::Number(3.0)),
        ("c", Value::Number(8.0)),
        ("d", Value::Number(1.0)),
        ("score", Value::Number(85.0)),
        ("bonus", Value::Boolean(true)),
        ("name", Value::Text("y".into())),
        ("flag", Value::Boolean(true)),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect();
    c.bench_function("expr_eval", |b| {
        b.iter(|| {
            for e in &parsed {
                let _ = black_box(eval(e, &store));
            }
        })
    });
}

fn graphs(c: &mut Criterion) {
    let desk = desk();
    let tools = full_registry();
    c.bench_function("validate_desk", |b| {
        b.iter(|| {
            for inst in &desk {
                black_box(validate(golden(inst), |n| tools.is_business(n)));
            }
        })
    });
    c.bench_function("canonicalize_desk", |b| {
        b.iter(|| {
            for inst in &desk {
                let _ = black_box(canonicalize(golden(inst)));
            }
        })
    });
    c.bench_function("equivalence_desk", |b| {
        b.iter(|| {
            for inst in &desk {
                let g = golden(inst);
                let _ = black_box(behavioral_equivalent(g, g, 16));
            }
        })
    });
}

fn codec(c: &mut Criterion) {
    c.bench_function("parse_action", |b| {
        b.iter(|| {
            for raw in ACTION_REPLIES {
                let _ = black_box(parse_action(black_box(raw)));
            }
        })
    });
}

criterion_group!(benches, executor, expressions, graphs, codec);
criterion_main!(benches);
