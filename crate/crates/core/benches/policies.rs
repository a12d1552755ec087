//! Sequential against data-parallel execution for the two hot loops: dense
//! gate application and the reference engine's join/aggregate.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use qsql_core::backend::ReferenceBackend;
use qsql_core::codegen::{translate_circuit, CodegenOptions};
use qsql_core::executor::run_plan;
use qsql_core::families::{generate_family, CircuitFamily};
use qsql_core::oracle::simulate_dense_with;
use qsql_core::parallel::ExecPolicy;

const POLICIES: [(&str, ExecPolicy); 2] = [
    ("sequential", ExecPolicy::Sequential),
    ("parallel", ExecPolicy::Parallel),
];

fn dense(c: &mut Criterion) {
    let mut group = c.benchmark_group("dense_apply");
    group.sample_size(10);
    for n in [14, 18] {
        let circuit = generate_family(&CircuitFamily::RandomDense { n, depth: 20, seed: 1 }).unwrap();
        for (name, policy) in POLICIES {
            group.bench_with_input(BenchmarkId::new(name, n), &circuit, |b, circuit| {
                b.iter(|| simulate_dense_with(black_box(circuit), policy).unwrap())
            });
        }
    }
    group.finish();
}

fn reference(c: &mut Criterion) {
    let mut group = c.benchmark_group("reference_engine");
    group.sample_size(10);
    for n in [10, 13] {
        let circuit = generate_family(&CircuitFamily::EqualSuperposition { n }).unwrap();
        let plan = translate_circuit(&circuit, &CodegenOptions::default()).unwrap();
        for (name, policy) in POLICIES {
            group.bench_with_input(BenchmarkId::new(name, n), &plan, |b, plan| {
                b.iter(|| run_plan(black_box(plan), &mut ReferenceBackend::with_policy(policy)).unwrap())
            });
        }
    }
    group.finish();
}

criterion_group!(benches, dense, reference);
criterion_main!(benches);
