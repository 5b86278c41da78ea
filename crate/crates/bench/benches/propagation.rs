use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rhpert_bench::{params, vector};
use rhpert_core::experiments::{short_time_limit_run, ChainStateSpec, LimitSchedule};
use rhpert_core::kernel::{propagate_vector, step_matrix};
use rhpert_core::{InverseTemperature, C64};

fn closed_form_vs_product(c: &mut Criterion) {
    let mut group = c.benchmark_group("propagate");
    for n in [10usize, 50, 200] {
        let p = params(n);
        let zeta = vector(n + 1);
        group.bench_with_input(BenchmarkId::new("closed_form", n), &n, |b, &n| {
            b.iter(|| propagate_vector(&p, n, black_box(&zeta)).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("matrix_product", n), &n, |b, &n| {
            b.iter(|| {
                let mut v = dense_apply(&p, n, black_box(&zeta));
                v.truncate(n + 1);
                v
            })
        });
    }
    group.finish();
}

/// Applies U_m, …, U_1 to ζ one dense step matrix at a time.
fn dense_apply(p: &rhpert_core::ModelParams, m: usize, zeta: &[C64]) -> Vec<C64> {
    let mut v = zeta.to_vec();
    for slot in (1..=m).rev() {
        let u = step_matrix(p, slot).unwrap().propagator(p, p.tau());
        v = (0..v.len()).map(|i| (0..v.len()).map(|j| u[(i, j)] * v[j]).sum()).collect();
    }
    v
}

fn limit_product(c: &mut Criterion) {
    let p = params(1);
    let schedule = LimitSchedule::new(0.4, 2.0, vec![100, 1_000, 10_000]).unwrap();
    let theta = [C64::new(1.0, 0.0)];
    c.bench_function("limit/gibbs_closed_form", |b| {
        let spec = ChainStateSpec::Gibbs { beta: InverseTemperature::new(1.0).unwrap() };
        b.iter(|| short_time_limit_run(&p, &schedule, &spec, &theta, 40).unwrap())
    });
    c.bench_function("limit/number_state_product", |b| {
        let spec = ChainStateSpec::NumberState { n: 1 };
        b.iter(|| short_time_limit_run(&p, &schedule, &spec, &theta, 16).unwrap())
    });
}

criterion_group!(benches, closed_form_vs_product, limit_product);
criterion_main!(benches);
